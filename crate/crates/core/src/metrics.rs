//! Per-map quality figures against an interference-free reference, and
//! empirical CDFs across frames.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::RdMap;
use crate::error::{Error, Result};
use crate::sigmodel::FrameConfig;

/// Range-Doppler cell of a generated object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthObject {
    pub range_bin: usize,
    pub doppler_bin: usize,
    pub amplitude: Complex64,
}

/// Object cells of a frame on the map grid of the plain chain (FFT-shifted
/// Doppler).
pub fn ground_truth_objects(cfg: &FrameConfig) -> Vec<GroundTruthObject> {
    let r = cfg.n_ramps as i64;
    cfg.objects
        .iter()
        .map(|o| {
            let bin = (o.omega * cfg.t_s * cfg.n_fast as f64 / (2.0 * PI)).round() as usize;
            let dop = (o.doppler_step * cfg.n_ramps as f64 / (2.0 * PI)).round() as i64;
            GroundTruthObject {
                range_bin: bin,
                doppler_bin: (dop + r / 2).rem_euclid(r) as usize,
                amplitude: Complex64::from_polar(o.amplitude, o.phi),
            }
        })
        .collect()
}

/// Two-dimensional cell-averaging CFAR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfarConfig {
    /// Training cells beyond the guard band, per side.
    pub training: usize,
    pub guard: usize,
    pub pfa: f64,
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self { training: 8, guard: 2, pfa: 1e-4 }
    }
}

impl CfarConfig {
    pub fn training_cells(&self) -> usize {
        let outer = 2 * (self.training + self.guard) + 1;
        let inner = 2 * self.guard + 1;
        outer * outer - inner * inner
    }

    /// Scale on the mean training power for exponential noise.
    pub fn threshold_factor(&self) -> f64 {
        let n = self.training_cells() as f64;
        n * (self.pfa.powf(-1.0 / n) - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub mse: f64,
    pub sinr_db: f64,
    /// Percent.
    pub evm: f64,
    pub tpr: f64,
    pub far: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Circular sum over `[-radius, radius]` along one axis of a
/// `rows x cols` row-major array.
fn box_sum(x: &[f64], rows: usize, cols: usize, radius: usize, along_cols: bool) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let (len, count, at): (usize, usize, Box<dyn Fn(usize, usize) -> usize>) = if along_cols {
        (cols, rows, Box::new(move |line, i| line * cols + i))
    } else {
        (rows, cols, Box::new(move |line, i| i * cols + line))
    };
    let span = 2 * radius + 1;
    for line in 0..count {
        if span >= len {
            // wrapping windows count cells more than once
            for i in 0..len {
                out[at(line, i)] = (0..span).map(|o| x[at(line, (i + len * span - radius + o) % len)]).sum();
            }
            continue;
        }
        let mut s: f64 = (0..span).map(|o| x[at(line, (o + len - radius) % len)]).sum();
        for i in 0..len {
            out[at(line, i)] = s;
            s += x[at(line, (i + radius + 1) % len)] - x[at(line, (i + len - radius) % len)];
        }
    }
    out
}

fn box2(x: &[f64], rows: usize, cols: usize, radius: usize) -> Vec<f64> {
    let a = box_sum(x, rows, cols, radius, true);
    box_sum(&a, rows, cols, radius, false)
}

/// CFAR detections on a power map stored `rows x cols` row-major; a cell
/// must also be the largest in its 3 x 3 neighbourhood.
pub fn ca_cfar_2d(power: &[f64], rows: usize, cols: usize, cfg: &CfarConfig) -> Vec<bool> {
    let outer = box2(power, rows, cols, cfg.training + cfg.guard);
    let inner = box2(power, rows, cols, cfg.guard);
    let factor = cfg.threshold_factor();
    let nt = cfg.training_cells() as f64;
    (0..rows * cols)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            let noise = (outer[i] - inner[i]).max(0.0) / nt;
            let p = power[i];
            if !(p > factor * noise) {
                return false;
            }
            for dr in [rows - 1, 0, 1] {
                for dc in [cols - 1, 0, 1] {
                    if (dr, dc) != (0, 0) && power[((r + dr) % rows) * cols + (c + dc) % cols] > p {
                        return false;
                    }
                }
            }
            true
        })
        .collect()
}

fn normalized(map: &RdMap) -> Vec<Complex64> {
    let peak = map.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak > 0.0 {
        map.data.iter().map(|z| z / peak).collect()
    } else {
        map.data.clone()
    }
}

fn near(a: (usize, usize), b: (usize, usize), n_doppler: usize) -> bool {
    let dr = a.0.abs_diff(b.0);
    let dd = a.1.abs_diff(b.1);
    dr <= 1 && dd.min(n_doppler - dd) <= 1
}

const DB_LIMIT: f64 = 300.0;

/// Quality of `test` against `reference` at the ground-truth objects.
pub fn frame_metrics(test: &RdMap, reference: &RdMap, gt: &[GroundTruthObject], cfar: &CfarConfig) -> Result<FrameMetrics> {
    let (nr, nd) = (test.n_range, test.n_doppler);
    if reference.n_range != nr || reference.n_doppler != nd || test.data.len() != nr * nd {
        return Err(Error::Config(format!(
            "map shapes differ: {}x{} vs {}x{}",
            nr, nd, reference.n_range, reference.n_doppler
        )));
    }
    if let Some(o) = gt.iter().find(|o| o.range_bin >= nr || o.doppler_bin >= nd) {
        return Err(Error::Config(format!("object cell ({}, {}) outside the map", o.range_bin, o.doppler_bin)));
    }
    let t = normalized(test);
    let r = normalized(reference);
    let total = t.len();
    let at = |range: usize, dop: usize| dop * nr + range;

    let mse = t.iter().zip(&r).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / total as f64;

    let mut object_zone = vec![false; total];
    for o in gt {
        for dr in -1i64..=1 {
            let range = o.range_bin as i64 + dr;
            if range < 0 || range >= nr as i64 {
                continue;
            }
            for dd in -1i64..=1 {
                let dop = (o.doppler_bin as i64 + dd).rem_euclid(nd as i64) as usize;
                object_zone[at(range as usize, dop)] = true;
            }
        }
    }
    let (mut sig, mut rest) = (0.0, 0.0);
    for (z, &inside) in t.iter().zip(&object_zone) {
        if inside {
            sig += z.norm_sqr();
        } else {
            rest += z.norm_sqr();
        }
    }
    let sinr_db = if sig == 0.0 {
        -DB_LIMIT
    } else if rest == 0.0 {
        DB_LIMIT
    } else {
        (10.0 * (sig / rest).log10()).clamp(-DB_LIMIT, DB_LIMIT)
    };

    let mut ratios = Vec::new();
    for o in gt {
        let i = at(o.range_bin, o.doppler_bin);
        let denom = r[i].norm();
        if denom > 0.0 {
            ratios.push(((t[i] - r[i]).norm() / denom).powi(2));
        }
    }
    let evm = if ratios.is_empty() {
        0.0
    } else {
        100.0 * (ratios.iter().sum::<f64>() / ratios.len() as f64).sqrt()
    };

    // CFAR runs on a Doppler-major layout: rows are Doppler bins
    let power: Vec<f64> = t.iter().map(|z| z.norm_sqr()).collect();
    let det = ca_cfar_2d(&power, nd, nr, cfar);
    let hits: Vec<(usize, usize)> = (0..total).filter(|&i| det[i]).map(|i| (i % nr, i / nr)).collect();
    let tp = gt
        .iter()
        .filter(|o| hits.iter().any(|&h| near(h, (o.range_bin, o.doppler_bin), nd)))
        .count();
    let fn_ = gt.len() - tp;
    let fp = hits
        .iter()
        .filter(|&&h| !gt.iter().any(|o| near(h, (o.range_bin, o.doppler_bin), nd)))
        .count();
    let free_cells = object_zone.iter().filter(|&&z| !z).count();
    let tpr = if gt.is_empty() { 1.0 } else { tp as f64 / gt.len() as f64 };
    let far = if free_cells == 0 { 0.0 } else { fp as f64 / free_cells as f64 };
    let denom = 2 * tp + fp + fn_;
    let f1 = if denom == 0 { 1.0 } else { 2.0 * tp as f64 / denom as f64 };
    Ok(FrameMetrics { mse, sinr_db, evm, tpr, far, f1, tp, fp, fn_ })
}

/// Sorted values with their cumulative fractions `(i + 1) / n`.
pub fn ecdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::Config("empirical CDF of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    Ok(v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect())
}

/// Median of a nonempty list.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Config("median of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Provenance;

    fn map(nr: usize, nd: usize, f: impl Fn(usize, usize) -> Complex64) -> RdMap {
        let mut data = Vec::with_capacity(nr * nd);
        for d in 0..nd {
            for r in 0..nr {
                data.push(f(r, d));
            }
        }
        RdMap { n_range: nr, n_doppler: nd, data, provenance: Provenance::default() }
    }

    fn scene() -> (RdMap, Vec<GroundTruthObject>) {
        let gt = vec![
            GroundTruthObject { range_bin: 10, doppler_bin: 5, amplitude: Complex64::new(1.0, 0.0) },
            GroundTruthObject { range_bin: 40, doppler_bin: 20, amplitude: Complex64::new(0.5, 0.0) },
        ];
        let m = map(64, 32, |r, d| {
            if (r, d) == (10, 5) {
                Complex64::new(1.0, 0.0)
            } else if (r, d) == (40, 20) {
                Complex64::new(0.0, 0.5)
            } else {
                Complex64::new(1e-4 * ((r * 7 + d * 3) % 5) as f64, 0.0)
            }
        });
        (m, gt)
    }

    #[test]
    fn identical_maps_are_perfect() {
        let (m, gt) = scene();
        let fm = frame_metrics(&m, &m, &gt, &CfarConfig::default()).unwrap();
        assert_eq!(fm.mse, 0.0);
        assert_eq!(fm.evm, 0.0);
        assert_eq!(fm.f1, 1.0);
        assert_eq!(fm.tpr, 1.0);
        assert_eq!(fm.far, 0.0);
    }

    #[test]
    fn flat_floor_sinr_closed_form() {
        let gt = vec![GroundTruthObject { range_bin: 8, doppler_bin: 8, amplitude: Complex64::new(1.0, 0.0) }];
        let floor = 0.1; // -20 dB of the unit peak
        let m = map(32, 16, |r, d| Complex64::new(if (r, d) == (8, 8) { 1.0 } else { floor }, 0.0));
        let fm = frame_metrics(&m, &m, &gt, &CfarConfig::default()).unwrap();
        let sig = 1.0 + 8.0 * floor * floor;
        let rest = (32.0 * 16.0 - 9.0) * floor * floor;
        assert!((fm.sinr_db - 10.0 * (sig / rest).log10()).abs() < 1e-9);
    }

    #[test]
    fn empty_ground_truth_convention() {
        let (m, _) = scene();
        let fm = frame_metrics(&m, &m, &[], &CfarConfig::default()).unwrap();
        assert_eq!(fm.tpr, 1.0);
        assert_eq!(fm.tp + fm.fn_, 0);
        assert!(fm.far > 0.0);
    }

    #[test]
    fn scaling_does_not_change_metrics() {
        let (m, gt) = scene();
        let mut noisy = m.clone();
        noisy.data[100] += Complex64::new(0.3, 0.1);
        let a = frame_metrics(&noisy, &m, &gt, &CfarConfig::default()).unwrap();
        let scale = |x: &RdMap, c: f64| RdMap { data: x.data.iter().map(|z| z * c).collect(), ..x.clone() };
        let b = frame_metrics(&scale(&noisy, 7.5), &scale(&m, 0.2), &gt, &CfarConfig::default()).unwrap();
        assert!((a.mse - b.mse).abs() < 1e-12 && (a.sinr_db - b.sinr_db).abs() < 1e-9 && (a.evm - b.evm).abs() < 1e-9);
        assert_eq!((a.tp, a.fp, a.fn_), (b.tp, b.fp, b.fn_));
        let p = a.tp as f64 / (a.tp + a.fp) as f64;
        let r = a.tp as f64 / (a.tp + a.fn_) as f64;
        assert_eq!(a.f1, 2.0 * a.tp as f64 / (2 * a.tp + a.fp + a.fn_) as f64);
        assert!((a.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (m, gt) = scene();
        let other = map(32, 32, |_, _| Complex64::new(1.0, 0.0));
        assert!(frame_metrics(&m, &other, &gt, &CfarConfig::default()).is_err());
    }

    #[test]
    fn cfar_window_size_and_factor() {
        let c = CfarConfig::default();
        assert_eq!(c.training_cells(), 416);
        let f = c.threshold_factor();
        assert!((f - 416.0 * (1e-4f64.powf(-1.0 / 416.0) - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn box_sums_match_brute_force() {
        let (rows, cols) = (7, 9);
        let x: Vec<f64> = (0..rows * cols).map(|i| ((i * 37) % 11) as f64).collect();
        let fast = box2(&x, rows, cols, 2);
        for r in 0..rows {
            for c in 0..cols {
                let mut s = 0.0;
                for dr in 0..5 {
                    for dc in 0..5 {
                        s += x[((r + rows + dr - 2) % rows) * cols + (c + cols + dc - 2) % cols];
                    }
                }
                assert!((fast[r * cols + c] - s).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ecdf_steps() {
        assert_eq!(ecdf(&[1.0]).unwrap(), vec![(1.0, 1.0)]);
        assert_eq!(ecdf(&[2.0, 1.0]).unwrap(), vec![(1.0, 0.5), (2.0, 1.0)]);
        assert!(ecdf(&[]).is_err());
    }

    #[test]
    fn ecdf_of_uniform_draws_tracks_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<f64> = (0..250).map(|_| rng.random::<f64>()).collect();
        let e = ecdf(&draws).unwrap();
        let mut worst: f64 = 0.0;
        for (i, &(x, f)) in e.iter().enumerate() {
            let below = i as f64 / 250.0;
            worst = worst.max((f - x).abs()).max((below - x).abs());
        }
        assert!(worst < 0.12, "{worst}");
        assert_eq!(e.last().unwrap().1, 1.0);
    }

    #[test]
    fn ground_truth_cells_from_config() {
        let cfg = FrameConfig {
            n_fast: 1024,
            n_ramps: 16,
            t_s: 0.5,
            noise_power: 0.0,
            objects: vec![crate::sigmodel::ObjectParams {
                amplitude: 2.0,
                omega: 2.0 * PI * 37.0 / (1024.0 * 0.5),
                phi: 0.0,
                doppler_step: 2.0 * PI * -3.0 / 16.0,
            }],
            interferers: vec![],
            rng_seed: 0,
        };
        let gt = ground_truth_objects(&cfg);
        assert_eq!((gt[0].range_bin, gt[0].doppler_bin), (37, 5));
    }
}
