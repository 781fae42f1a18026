//! Synthetic FMCW frames: object beat tones, linear-FM interference and
//! white noise, kept as separate components.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectParams {
    pub amplitude: f64,
    /// Beat frequency in rad/s.
    pub omega: f64,
    pub phi: f64,
    /// Phase advance per ramp (Doppler), rad.
    pub doppler_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceParams {
    pub amplitude: f64,
    /// Hz/s, either sign.
    pub chirp_rate: f64,
    /// Time at which the interferer crosses the victim's frequency, s.
    pub tau: f64,
    pub phi0: f64,
    /// Anti-aliasing bandwidth, Hz.
    pub bandwidth: f64,
    /// Drift of `tau` per ramp, s.
    pub tau_step: f64,
    /// Phase advance per ramp, rad.
    pub phase_step: f64,
    /// Ramps on which the interferer is active.
    pub present: Vec<bool>,
}

impl InterferenceParams {
    pub fn tau_at(&self, ramp: usize) -> f64 {
        self.tau + self.tau_step * ramp as f64
    }

    /// Sample range with `|k (n T_s - tau)| < B`, clipped to the ramp.
    pub fn support(&self, ramp: usize, n_fast: usize, t_s: f64) -> Range<usize> {
        let half = self.bandwidth / self.chirp_rate.abs() / t_s;
        let centre = self.tau_at(ramp) / t_s;
        let lo = (centre - half).floor() + 1.0;
        let hi = (centre + half).ceil() - 1.0;
        let lo = lo.max(0.0);
        let hi = hi.min(n_fast as f64 - 1.0);
        if hi < lo {
            0..0
        } else {
            lo as usize..hi as usize + 1
        }
    }

    /// Samples of this interferer on one ramp, zero outside its support
    /// or when it is absent.
    pub fn ramp_samples(&self, ramp: usize, n_fast: usize, t_s: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n_fast];
        if !self.present.get(ramp).copied().unwrap_or(false) {
            return out;
        }
        let tau = self.tau_at(ramp);
        let k = self.chirp_rate;
        let extra = self.phi0 + self.phase_step * ramp as f64;
        for n in self.support(ramp, n_fast, t_s) {
            let t = n as f64 * t_s;
            let phase = -2.0 * PI * k * tau * t + PI * k * t * t + extra;
            out[n] = Complex64::from_polar(self.amplitude, phase);
        }
        out
    }

    /// Normalised chirp rate `k T_s^2` in cycles per sample squared.
    pub fn normalized_rate(&self, t_s: f64) -> f64 {
        self.chirp_rate * t_s * t_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub n_fast: usize,
    pub n_ramps: usize,
    pub t_s: f64,
    pub noise_power: f64,
    pub objects: Vec<ObjectParams>,
    pub interferers: Vec<InterferenceParams>,
    pub rng_seed: u64,
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fast == 0 || self.n_ramps == 0 {
            return Err(Error::Config("frame dimensions must be positive".into()));
        }
        if !(self.t_s > 0.0 && self.noise_power >= 0.0) {
            return Err(Error::Config("sample interval must be positive and noise power non-negative".into()));
        }
        for o in &self.objects {
            if !(o.amplitude > 0.0) || !(0.0..2.0 * PI).contains(&o.phi) {
                return Err(Error::Config("object needs A > 0 and 0 <= phi < 2 pi".into()));
            }
        }
        for (i, p) in self.interferers.iter().enumerate() {
            if p.present.len() != self.n_ramps {
                return Err(Error::Config(format!("interferer {i}: presence flags for {} ramps", p.present.len())));
            }
            if p.chirp_rate == 0.0 || !(p.bandwidth > 0.0) || p.amplitude < 0.0 {
                return Err(Error::Config(format!("interferer {i}: needs k != 0, B > 0, A >= 0")));
            }
            for r in (0..self.n_ramps).filter(|&r| p.present[r]) {
                if p.support(r, self.n_fast, self.t_s).is_empty() {
                    return Err(Error::Config(format!("interferer {i}: empty support on ramp {r}")));
                }
            }
        }
        Ok(())
    }
}

/// Complex samples of one frame, ramp-major: ramp `r` is
/// `data[r * n_fast..(r + 1) * n_fast]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub n_fast: usize,
    pub n_ramps: usize,
    pub data: Vec<Complex64>,
}

impl Cube {
    pub fn zeros(n_fast: usize, n_ramps: usize) -> Self {
        Self { n_fast, n_ramps, data: vec![Complex64::new(0.0, 0.0); n_fast * n_ramps] }
    }

    pub fn ramp(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.n_fast..(r + 1) * self.n_fast]
    }

    pub fn ramp_mut(&mut self, r: usize) -> &mut [Complex64] {
        &mut self.data[r * self.n_fast..(r + 1) * self.n_fast]
    }

    /// `Re{.}` of every sample.
    pub fn real_part(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }
}

/// One frame with its additive components.
#[derive(Debug, Clone)]
pub struct RadarCube {
    pub config: FrameConfig,
    /// `objects + interference + noise`, summed in that order.
    pub data: Cube,
    pub objects: Cube,
    pub interference: Cube,
    pub noise: Cube,
}

impl RadarCube {
    pub fn generate(config: FrameConfig) -> Result<Self> {
        let objects = gen_objects(&config)?;
        let interference = gen_interference(&config)?;
        let noise = gen_noise(&config)?;
        let mut data = objects.clone();
        for ((d, i), n) in data.data.iter_mut().zip(&interference.data).zip(&noise.data) {
            *d = *d + *i + *n;
        }
        Ok(Self { config, data, objects, interference, noise })
    }

    /// Samples seen by a real-valued receiver.
    pub fn received_real(&self) -> Vec<f64> {
        self.data.real_part()
    }
}

pub fn gen_objects(cfg: &FrameConfig) -> Result<Cube> {
    cfg.validate()?;
    let mut cube = Cube::zeros(cfg.n_fast, cfg.n_ramps);
    for r in 0..cfg.n_ramps {
        let ramp = cube.ramp_mut(r);
        for o in &cfg.objects {
            let phase0 = o.phi + o.doppler_step * r as f64;
            for (n, z) in ramp.iter_mut().enumerate() {
                *z += Complex64::from_polar(o.amplitude, o.omega * n as f64 * cfg.t_s + phase0);
            }
        }
    }
    Ok(cube)
}

pub fn gen_interference(cfg: &FrameConfig) -> Result<Cube> {
    cfg.validate()?;
    let mut cube = Cube::zeros(cfg.n_fast, cfg.n_ramps);
    for p in &cfg.interferers {
        for r in (0..cfg.n_ramps).filter(|&r| p.present[r]) {
            for (acc, z) in cube.ramp_mut(r).iter_mut().zip(p.ramp_samples(r, cfg.n_fast, cfg.t_s)) {
                *acc += z;
            }
        }
    }
    Ok(cube)
}

pub fn gen_noise(cfg: &FrameConfig) -> Result<Cube> {
    cfg.validate()?;
    let mut cube = Cube::zeros(cfg.n_fast, cfg.n_ramps);
    if cfg.noise_power == 0.0 {
        return Ok(cube);
    }
    let sigma = (cfg.noise_power / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    for z in &mut cube.data {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *z = Complex64::new(sigma * re, sigma * im);
    }
    Ok(cube)
}

/// Where object SNR is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrReference {
    /// Power of one received sample against the noise power.
    Sample,
    /// Peak of the range spectrum against its noise floor: the per-sample
    /// ratio times the `n_fast / 2` demodulated samples of a ramp.
    RangeBin,
}

/// Randomisation ranges of a synthetic dataset. Closed ranges `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub count: usize,
    pub n_fast: usize,
    pub n_ramps: usize,
    pub sample_rate_hz: f64,
    pub noise_power: f64,
    pub objects: [usize; 2],
    pub object_snr_db: [f64; 2],
    pub object_snr_reference: SnrReference,
    /// Beat-frequency bins of the `n_fast`-point spectrum.
    pub object_bins: [usize; 2],
    pub interferers: [usize; 2],
    pub inr_db: [f64; 2],
    /// Range of `|alpha|` the interference compresses at after the frontend.
    pub interference_angle_deg: [f64; 2],
    /// `k T_s^2 = cot|alpha| / angle_rate_scale`; depends on the frontend
    /// resampling (see `FrontendConfig::angle_rate_scale`).
    pub angle_rate_scale: f64,
    /// `B / f_s`.
    pub bandwidth_fraction: f64,
    pub interfered_ramp_fraction: f64,
    /// Largest `|tau|` drift per ramp, in samples.
    pub max_tau_step_samples: f64,
    pub master_seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            count: 250,
            n_fast: 1024,
            n_ramps: 128,
            sample_rate_hz: 20e6,
            noise_power: 1.0,
            objects: [1, 5],
            object_snr_db: [10.0, 30.0],
            object_snr_reference: SnrReference::RangeBin,
            object_bins: [16, 496],
            interferers: [1, 3],
            inr_db: [20.0, 40.0],
            interference_angle_deg: [20.0, 70.0],
            angle_rate_scale: 4.0 * 896.0 / (1.25 * 1.25),
            bandwidth_fraction: 0.45,
            interfered_ramp_fraction: 0.3,
            max_tau_step_samples: 1.0,
            master_seed: 1,
        }
    }
}

fn check_range<T: PartialOrd + Copy + std::fmt::Debug>(name: &str, r: [T; 2]) -> Result<()> {
    if r[0] > r[1] {
        return Err(Error::Config(format!("{name}: empty range {r:?}")));
    }
    Ok(())
}

impl DatasetSpec {
    pub fn t_s(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        check_range("objects", self.objects)?;
        check_range("object_snr_db", self.object_snr_db)?;
        check_range("object_bins", self.object_bins)?;
        check_range("interferers", self.interferers)?;
        check_range("inr_db", self.inr_db)?;
        check_range("interference_angle_deg", self.interference_angle_deg)?;
        if self.n_fast < 2 || self.n_ramps == 0 || !(self.sample_rate_hz > 0.0) {
            return Err(Error::Config("bad frame geometry".into()));
        }
        if self.object_bins[1] >= self.n_fast / 2 {
            return Err(Error::Config("object bins must stay below n_fast/2".into()));
        }
        let [a0, a1] = self.interference_angle_deg;
        if !(a0 > 0.0 && a1 < 90.0) {
            return Err(Error::Config("interference angles must lie in (0, 90) degrees".into()));
        }
        if !(0.0..=1.0).contains(&self.interfered_ramp_fraction)
            || !(self.bandwidth_fraction > 0.0 && self.bandwidth_fraction <= 0.5)
            || !(self.angle_rate_scale > 0.0)
            || self.max_tau_step_samples < 0.0
            || self.noise_power < 0.0
        {
            return Err(Error::Config("dataset fractions or scales out of range".into()));
        }
        Ok(())
    }

    /// Random parameters of frame `index`, independent of other frames.
    pub fn frame_config(&self, index: usize) -> Result<FrameConfig> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index as u64);
        let t_s = self.t_s();
        let n_fast = self.n_fast;
        let uniform = |rng: &mut ChaCha8Rng, r: [f64; 2]| {
            if r[0] == r[1] {
                r[0]
            } else {
                rng.random_range(r[0]..r[1])
            }
        };

        let n_obj = rng.random_range(self.objects[0]..=self.objects[1]);
        let mut used = Vec::new();
        let mut objects = Vec::with_capacity(n_obj);
        while objects.len() < n_obj {
            let bin = rng.random_range(self.object_bins[0]..=self.object_bins[1]);
            let dop = rng.random_range(0..self.n_ramps) as i64 - self.n_ramps as i64 / 2;
            // keep objects at least 3 cells apart so each has its own peak
            if used.iter().any(|&(b, d): &(usize, i64)| b.abs_diff(bin) < 3 && (d - dop).abs() < 3) {
                if used.len() >= (self.object_bins[1] - self.object_bins[0] + 1) {
                    break;
                }
                continue;
            }
            used.push((bin, dop));
            let mut snr = uniform(&mut rng, self.object_snr_db);
            if self.object_snr_reference == SnrReference::RangeBin {
                snr -= 10.0 * (n_fast as f64 / 2.0).log10();
            }
            objects.push(ObjectParams {
                amplitude: (self.noise_power.max(1e-300) * 10f64.powf(snr / 10.0)).sqrt(),
                omega: 2.0 * PI * bin as f64 / (n_fast as f64 * t_s),
                phi: rng.random_range(0.0..2.0 * PI),
                doppler_step: 2.0 * PI * dop as f64 / self.n_ramps as f64,
            });
        }

        let n_int = rng.random_range(self.interferers[0]..=self.interferers[1]);
        let active = ((self.interfered_ramp_fraction * self.n_ramps as f64).round() as usize).min(self.n_ramps);
        let mut interferers = Vec::with_capacity(n_int);
        for _ in 0..n_int {
            let inr = uniform(&mut rng, self.inr_db);
            let alpha = uniform(&mut rng, self.interference_angle_deg).to_radians();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let rate = sign / alpha.tan() / self.angle_rate_scale / (t_s * t_s);
            let first = if active < self.n_ramps {
                rng.random_range(0..=self.n_ramps - active)
            } else {
                0
            };
            let step = if self.max_tau_step_samples > 0.0 {
                rng.random_range(-self.max_tau_step_samples..=self.max_tau_step_samples)
            } else {
                0.0
            };
            // crossing point stays inside the ramp on every active ramp
            let drift = step * active.saturating_sub(1) as f64;
            let lo = (0.0f64).max(-drift) + 1.0;
            let hi = (n_fast as f64 - 1.0).min(n_fast as f64 - 1.0 - drift) - 1.0;
            let centre = rng.random_range(lo..hi.max(lo + 1e-9));
            let tau0 = (centre - step * first as f64) * t_s;
            interferers.push(InterferenceParams {
                amplitude: (self.noise_power.max(1e-300) * 10f64.powf(inr / 10.0)).sqrt(),
                chirp_rate: rate,
                tau: tau0,
                phi0: rng.random_range(0.0..2.0 * PI),
                bandwidth: self.bandwidth_fraction * self.sample_rate_hz,
                tau_step: step * t_s,
                phase_step: rng.random_range(0.0..2.0 * PI),
                present: (0..self.n_ramps).map(|r| r >= first && r < first + active).collect(),
            });
        }

        Ok(FrameConfig {
            n_fast,
            n_ramps: self.n_ramps,
            t_s,
            noise_power: self.noise_power,
            objects,
            interferers,
            rng_seed: rng.random(),
        })
    }

    pub fn frame_configs(&self, count: usize) -> Result<Vec<FrameConfig>> {
        (0..count).map(|i| self.frame_config(i)).collect()
    }

    pub fn frame(&self, index: usize) -> Result<RadarCube> {
        RadarCube::generate(self.frame_config(index)?)
    }
}

/// `count` frames generated in parallel; identical to generating them one
/// by one.
pub fn gen_dataset(spec: &DatasetSpec, count: usize) -> Result<Vec<RadarCube>> {
    (0..count).into_par_iter().map(|i| spec.frame(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::FftPlanner;

    fn base(objects: Vec<ObjectParams>, interferers: Vec<InterferenceParams>, noise: f64) -> FrameConfig {
        FrameConfig {
            n_fast: 64,
            n_ramps: 4,
            t_s: 1.0,
            noise_power: noise,
            objects,
            interferers,
            rng_seed: 9,
        }
    }

    fn obj(a: f64, bin: f64, n: usize) -> ObjectParams {
        ObjectParams { amplitude: a, omega: 2.0 * PI * bin / n as f64, phi: 0.0, doppler_step: 0.0 }
    }

    #[test]
    fn dc_object_is_all_ones() {
        let c = gen_objects(&base(vec![obj(1.0, 0.0, 64)], vec![], 0.0)).unwrap();
        assert!(c.data.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn object_peaks_at_its_bin() {
        let c = gen_objects(&base(vec![obj(1.0, 5.0, 64)], vec![], 0.0)).unwrap();
        let mut x = c.ramp(0).to_vec();
        FftPlanner::new().plan_fft_forward(64).process(&mut x);
        let peak = (0..64).max_by(|&a, &b| x[a].norm().total_cmp(&x[b].norm())).unwrap();
        assert_eq!(peak, 5);
    }

    #[test]
    fn objects_superpose() {
        let a = obj(1.0, 5.0, 64);
        let b = ObjectParams { phi: 1.0, doppler_step: 0.3, ..obj(2.0, 9.0, 64) };
        let both = gen_objects(&base(vec![a, b], vec![], 0.0)).unwrap();
        let ca = gen_objects(&base(vec![a], vec![], 0.0)).unwrap();
        let cb = gen_objects(&base(vec![b], vec![], 0.0)).unwrap();
        for i in 0..both.data.len() {
            assert!((both.data[i] - ca.data[i] - cb.data[i]).norm() < 1e-12);
        }
    }

    fn chirp(a: f64, k: f64, tau: f64, b: f64, ramps: usize) -> InterferenceParams {
        InterferenceParams {
            amplitude: a,
            chirp_rate: k,
            tau,
            phi0: 0.0,
            bandwidth: b,
            tau_step: 0.0,
            phase_step: 0.0,
            present: vec![true; ramps],
        }
    }

    #[test]
    fn zero_amplitude_interference() {
        let c = gen_interference(&base(vec![], vec![chirp(0.0, 0.01, 32.0, 0.2, 4)], 0.0)).unwrap();
        assert!(c.data.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn support_length_follows_bandwidth() {
        let p = chirp(1.0, 0.01, 32.0, 0.1, 4);
        // |n - 32| < 10
        assert_eq!(p.support(0, 64, 1.0), 23..42);
        let c = gen_interference(&base(vec![], vec![p.clone()], 0.0)).unwrap();
        assert_eq!(c.ramp(0).iter().filter(|z| z.norm() > 0.0).count(), 19);
        // clipped at the ramp end
        let q = InterferenceParams { tau: 60.0, ..p };
        assert_eq!(q.support(0, 64, 1.0), 51..64);
    }

    #[test]
    fn stft_ridge_slope_matches_rate() {
        use crate::stft::{fit_slope, Stft};
        let t_s = 1.0 / 20e6;
        for rate in [2e-4, -3e-4] {
            let k = rate / (t_s * t_s);
            let cfg = FrameConfig {
                n_fast: 1024,
                n_ramps: 1,
                t_s,
                ..base(vec![], vec![chirp(1.0, k, 512.0 * t_s, 0.45 / t_s, 1)], 0.0)
            };
            let c = gen_interference(&cfg).unwrap();
            let s = Stft::compute(c.ramp(0), 64, 16, 256).unwrap();
            let slope = fit_slope(&s.ridge(0.5)).unwrap();
            assert!((slope / rate - 1.0).abs() < 0.05, "rate {rate}: slope {slope}");
        }
    }

    #[test]
    fn empty_support_is_rejected() {
        let p = InterferenceParams { tau: 500.0, ..chirp(1.0, 0.01, 0.0, 0.1, 4) };
        assert!(gen_interference(&base(vec![], vec![p], 0.0)).is_err());
    }

    #[test]
    fn noise_power_and_determinism() {
        let cfg = FrameConfig { n_fast: 1000, n_ramps: 1000, ..base(vec![], vec![], 1.0) };
        let a = gen_noise(&cfg).unwrap();
        let var = a.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / a.data.len() as f64;
        assert!((var - 1.0).abs() < 0.01, "{var}");
        assert_eq!(a, gen_noise(&cfg).unwrap());
        let zero = gen_noise(&FrameConfig { noise_power: 0.0, ..cfg }).unwrap();
        assert!(zero.data.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn components_sum_exactly() {
        let spec = DatasetSpec { n_ramps: 8, ..DatasetSpec::default() };
        let cube = spec.frame(3).unwrap();
        for i in 0..cube.data.data.len() {
            assert_eq!(cube.data.data[i], cube.objects.data[i] + cube.interference.data[i] + cube.noise.data[i]);
        }
    }

    #[test]
    fn dataset_defaults_and_determinism() {
        let spec = DatasetSpec::default();
        let cfgs = spec.frame_configs(250).unwrap();
        assert_eq!(cfgs.len(), 250);
        assert!(cfgs.iter().all(|c| c.n_fast == 1024 && c.n_ramps == 128));
        assert!(cfgs.iter().all(|c| (1..=5).contains(&c.objects.len()) && (1..=3).contains(&c.interferers.len())));
        assert_eq!(cfgs, spec.frame_configs(250).unwrap());
        for c in &cfgs {
            c.validate().unwrap();
            for p in &c.interferers {
                let active = p.present.iter().filter(|&&x| x).count();
                assert_eq!(active, 38);
            }
        }
        let small = DatasetSpec { n_ramps: 4, ..spec };
        let a = gen_dataset(&small, 2).unwrap();
        let b = gen_dataset(&small, 2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.data, y.data);
        }
    }

    #[test]
    fn forcing_no_interferers_leaves_objects_plus_noise() {
        let spec = DatasetSpec { interferers: [0, 0], n_ramps: 4, ..DatasetSpec::default() };
        let cube = spec.frame(0).unwrap();
        assert!(cube.config.interferers.is_empty());
        for i in 0..cube.data.data.len() {
            assert_eq!(cube.data.data[i], cube.objects.data[i] + cube.noise.data[i]);
        }
    }

    #[test]
    fn real_part_spectrum_is_hermitian() {
        let spec = DatasetSpec { n_ramps: 2, ..DatasetSpec::default() };
        let cube = spec.frame(1).unwrap();
        let re = cube.received_real();
        let mut x: Vec<Complex64> = re[..1024].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(1024).process(&mut x);
        for k in 1..512 {
            assert!((x[k] - x[1024 - k].conj()).norm() < 1e-10 * x[k].norm().max(1.0));
        }
        for (r, z) in re.iter().zip(&cube.data.data) {
            assert!((r - 0.5 * (z + z.conj()).re).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_ranges_rejected() {
        let spec = DatasetSpec { inr_db: [40.0, 20.0], ..DatasetSpec::default() };
        assert!(spec.frame_config(0).is_err());
        let spec = DatasetSpec { interference_angle_deg: [0.0, 70.0], ..DatasetSpec::default() };
        assert!(spec.validate().is_err());
    }
}
