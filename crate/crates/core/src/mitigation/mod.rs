//! Iterative chirp mitigation on the multiangle grid.
//!
//! Each outer iteration builds the grid from the current eigen-coefficients,
//! then repeatedly picks the strongest admitted cell, tests it with the
//! least-of CFAR and, on detection, records the zeroed cells and removes the
//! chirp's support from the search mask. All chirps found in one outer
//! iteration are removed from the coefficients together. The loop ends when
//! an outer iteration finds nothing.

pub mod chirp;
pub mod mask;
pub mod update;

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::detector::{lo_cfar, DetectionMask, DetectorConfig};
use crate::eigenbasis::DftEigenbasis;
use crate::emdfrft::{EmdfrftGrid, EmdfrftPlan};
use crate::error::{Error, Result};

pub use chirp::{chirp_at_angle, ChirpLine};
pub use mask::{argmax_masked, SearchMask, SupportTemplates};
pub use update::{simultaneous_update, update_rho, ChirpDetection, SeparableBatch};

/// Default number of angles.
pub const DEFAULT_M_ANGLES: usize = 256;
/// Default largest searched angle, in degrees.
pub const DEFAULT_ALPHA_MAX_DEG: f64 = 80.0;
pub const DEFAULT_MAX_OUTER_ITERS: usize = 16;
pub const DEFAULT_SUPPORT_THRESHOLD_DB: f64 = -40.0;
/// Oracle search half-height in rows.
pub const ORACLE_ROW_RADIUS: usize = 2;

mod degrees {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(rad: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(rad.to_degrees())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        f64::deserialize(d).map(f64::to_radians)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MitigationConfig {
    pub m_angles: usize,
    /// Radians; written to config files in degrees.
    #[serde(rename = "alpha_max_deg", with = "degrees")]
    pub alpha_max: f64,
    pub detector: DetectorConfig,
    pub max_outer_iters: usize,
    /// Level below the per-angle peak at which a cell still counts as part
    /// of a chirp's support.
    pub support_threshold_db: f64,
    /// Rotate the input by `N/2` samples so the middle of the buffer sits at
    /// the transform's time origin.
    pub center_time: bool,
    pub oracle_mode: bool,
}

impl MitigationConfig {
    pub fn default_for(n: usize) -> Self {
        Self {
            m_angles: DEFAULT_M_ANGLES,
            alpha_max: DEFAULT_ALPHA_MAX_DEG.to_radians(),
            detector: DetectorConfig::default_for(n),
            max_outer_iters: DEFAULT_MAX_OUTER_ITERS,
            support_threshold_db: DEFAULT_SUPPORT_THRESHOLD_DB,
            center_time: true,
            oracle_mode: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.alpha_max > 0.0 && self.alpha_max < PI / 2.0) {
            return Err(Error::Config(format!(
                "alpha_max = {} rad must lie in (0, pi/2)",
                self.alpha_max
            )));
        }
        if self.m_angles < 4 || self.m_angles % 4 != 0 {
            return Err(Error::Config(format!(
                "number of angles M={} must be a positive multiple of 4",
                self.m_angles
            )));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::Config("max_outer_iters must be >= 1".into()));
        }
        if !(self.support_threshold_db.is_finite() && self.support_threshold_db < 0.0) {
            return Err(Error::Config("support threshold must be a negative dB value".into()));
        }
        self.detector.validate(n)
    }
}

/// Result of one mitigation run.
#[derive(Debug, Clone)]
pub struct ImfracOutput {
    /// Unitary DFT of the mitigated signal, in the input's sample order.
    pub spectrum: Vec<Complex64>,
    /// One batch per outer iteration that changed the coefficients.
    pub iterations: Vec<SeparableBatch>,
    pub grid_builds: usize,
    /// False when the iteration bound stopped the loop.
    pub converged: bool,
    /// Multiplications spent on sparse projections.
    pub projection_ops: usize,
}

impl ImfracOutput {
    pub fn updating_iterations(&self) -> usize {
        self.iterations.len()
    }

    pub fn detections(&self) -> impl Iterator<Item = &ChirpDetection> {
        self.iterations.iter().flat_map(|b| b.detections.iter())
    }

    pub fn detection_count(&self) -> usize {
        self.iterations.iter().map(SeparableBatch::len).sum()
    }
}

/// Mitigation engine bound to one basis and its support templates.
pub struct Mitigator<'a> {
    basis: &'a DftEigenbasis,
    plan: EmdfrftPlan<'a>,
    templates: &'a SupportTemplates,
    angle_mask: SearchMask,
    cfg: MitigationConfig,
}

impl<'a> Mitigator<'a> {
    pub fn new(basis: &'a DftEigenbasis, templates: &'a SupportTemplates, cfg: MitigationConfig) -> Result<Self> {
        let n = basis.n();
        cfg.validate(n)?;
        if templates.n() != n || templates.m_angles() != cfg.m_angles {
            return Err(Error::Config(format!(
                "templates are for N={} M={}, expected N={n} M={}",
                templates.n(),
                templates.m_angles(),
                cfg.m_angles
            )));
        }
        Ok(Self {
            basis,
            plan: EmdfrftPlan::new(basis, cfg.m_angles)?,
            templates,
            angle_mask: SearchMask::angle_mask(cfg.m_angles, n, cfg.alpha_max),
            cfg,
        })
    }

    pub fn config(&self) -> &MitigationConfig {
        &self.cfg
    }

    pub fn basis(&self) -> &DftEigenbasis {
        self.basis
    }

    pub fn plan(&self) -> &EmdfrftPlan<'a> {
        &self.plan
    }

    pub fn angle_mask(&self) -> &SearchMask {
        &self.angle_mask
    }

    fn shift(&self) -> usize {
        if self.cfg.center_time {
            self.basis.n() / 2
        } else {
            0
        }
    }

    /// Eigen-coefficients of the (optionally centred) input.
    pub fn to_eigen(&self, s: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.basis.n();
        if s.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: s.len() });
        }
        let h = self.shift();
        let rotated: Vec<Complex64> = (0..n).map(|j| s[(j + h) % n]).collect();
        self.basis.analyze(&rotated)
    }

    /// Undoes the centring rotation on a unitary spectrum.
    fn uncentre_spectrum(&self, mut spec: Vec<Complex64>) -> Vec<Complex64> {
        let n = spec.len();
        let h = self.shift();
        if h != 0 {
            for (k, z) in spec.iter_mut().enumerate() {
                let turns = (h * k % n) as f64 / n as f64;
                *z *= Complex64::from_polar(1.0, -2.0 * PI * turns);
            }
        }
        spec
    }

    /// Unitary spectrum of the signal with coefficients `rho`.
    pub fn spectrum_of(&self, rho: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut x = self.basis.synthesize(rho)?;
        let n = x.len();
        FftPlanner::new().plan_fft_forward(n).process(&mut x);
        let scale = 1.0 / (n as f64).sqrt();
        x.iter_mut().for_each(|z| *z *= scale);
        Ok(self.uncentre_spectrum(x))
    }

    fn inner_loop(&self, grid: &EmdfrftGrid) -> Result<SeparableBatch> {
        let mut mask = self.angle_mask.clone();
        let mut batch = SeparableBatch::new();
        while !mask.is_empty() {
            let (m_hat, n_hat) = argmax_masked(grid, &mask)?;
            let d = lo_cfar(grid.row(m_hat), n_hat, &self.cfg.detector)?;
            if !d.detected {
                break;
            }
            self.templates.exclude(&mut mask, m_hat, n_hat, self.cfg.detector.guard);
            batch.push(ChirpDetection::new(m_hat, n_hat, self.cfg.m_angles, d), grid.row(m_hat));
        }
        Ok(batch)
    }

    /// Runs the detector-driven loop on one sequence.
    pub fn run(&self, s: &[Complex64]) -> Result<ImfracOutput> {
        if self.cfg.oracle_mode {
            return Err(Error::Config(
                "oracle mode needs the true chirps; use run_oracle".into(),
            ));
        }
        let mut rho = self.to_eigen(s)?;
        let mut out = ImfracOutput {
            spectrum: Vec::new(),
            iterations: Vec::new(),
            grid_builds: 0,
            converged: false,
            projection_ops: 0,
        };
        for _ in 0..self.cfg.max_outer_iters {
            let grid = self.plan.compute(&rho)?;
            out.grid_builds += 1;
            let batch = self.inner_loop(&grid)?;
            if batch.is_empty() {
                out.converged = true;
                out.spectrum = self.uncentre_spectrum(grid.range_spectrum().to_vec());
                return Ok(out);
            }
            rho = simultaneous_update(&rho, &batch, self.basis)?;
            out.projection_ops += batch
                .gammas
                .iter()
                .map(|g| update::sparse_projection_ops(g.len(), self.basis.n()))
                .sum::<usize>();
            out.iterations.push(batch);
        }
        log::warn!(
            "mitigation stopped after {} outer iterations without converging",
            self.cfg.max_outer_iters
        );
        out.spectrum = self.spectrum_of(&rho)?;
        Ok(out)
    }

    /// Zeroes each given chirp in turn at the window maximum around its
    /// predicted cell, without a detection threshold.
    /// Zeroes one chirp per predicted line, sequentially, without a
    /// detection threshold.
    pub fn run_oracle(&self, s: &[Complex64], lines: &[ChirpLine]) -> Result<ImfracOutput> {
        let (n, m) = (self.basis.n(), self.cfg.m_angles);
        let cells = lines
            .iter()
            .map(|l| {
                check_oracle_angle(l, &self.cfg)?;
                Ok(l.grid_cell(n, m))
            })
            .collect::<Result<Vec<_>>>()?;
        self.run_oracle_at(s, &cells)
    }

    /// As [`run_oracle`](Self::run_oracle) with the predicted grid cells
    /// given directly.
    pub fn run_oracle_at(&self, s: &[Complex64], cells: &[(usize, usize)]) -> Result<ImfracOutput> {
        let mut rho = self.to_eigen(s)?;
        let mut out = ImfracOutput {
            spectrum: Vec::new(),
            iterations: Vec::new(),
            grid_builds: 0,
            converged: true,
            projection_ops: 0,
        };
        for &cell in cells {
            let grid = self.plan.compute(&rho)?;
            out.grid_builds += 1;
            let det = oracle_detect_at(&grid, cell, &self.cfg)?;
            let mut batch = SeparableBatch::new();
            let row = grid.row(det.m_hat);
            batch.push(det, row);
            rho = simultaneous_update(&rho, &batch, self.basis)?;
            out.projection_ops += update::sparse_projection_ops(batch.gammas[0].len(), self.basis.n());
            out.iterations.push(batch);
        }
        out.spectrum = self.spectrum_of(&rho)?;
        Ok(out)
    }

    /// Grid cell where an isolated chirp peaks within the searched angles;
    /// `None` for a zero signal.
    pub fn peak_cell(&self, chirp: &[Complex64]) -> Result<Option<(usize, usize)>> {
        if chirp.iter().all(|z| z.norm_sqr() == 0.0) {
            return Ok(None);
        }
        argmax_masked(&self.grid_of(chirp)?, &self.angle_mask).map(Some)
    }

    /// Multiangle grid of a sequence, centred as in [`run`](Self::run).
    pub fn grid_of(&self, s: &[Complex64]) -> Result<EmdfrftGrid> {
        self.plan.compute(&self.to_eigen(s)?)
    }

    /// Spectrum of `x` after applying the same zeroing decisions as a
    /// previous run. Mitigation is linear once the masks are fixed, so
    /// replaying on each additive component of a signal splits the output
    /// into the same components.
    pub fn replay(&self, x: &[Complex64], run: &ImfracOutput) -> Result<Vec<Complex64>> {
        let mut rho = self.to_eigen(x)?;
        for batch in &run.iterations {
            let mut next = rho.clone();
            for det in &batch.detections {
                let row = update::fractional_row(self.basis, &rho, det.alpha_hat)?;
                let gamma = crate::detector::masked_out(&row, &det.d);
                update::subtract_correction(&mut next, self.basis, &gamma, det.alpha_hat)?;
            }
            rho = next;
        }
        self.spectrum_of(&rho)
    }
}

/// Forced detection at the largest cell within `ORACLE_ROW_RADIUS` rows and
/// `2G` columns of the cell predicted for `line`.
fn check_oracle_angle(line: &ChirpLine, cfg: &MitigationConfig) -> Result<()> {
    let alpha = line.compressing_angle();
    if alpha.abs() > cfg.alpha_max {
        return Err(Error::Config(format!(
            "predicted angle {:.2} deg is outside the searched range",
            alpha.to_degrees()
        )));
    }
    Ok(())
}

pub fn oracle_detect(grid: &EmdfrftGrid, line: &ChirpLine, cfg: &MitigationConfig) -> Result<ChirpDetection> {
    check_oracle_angle(line, cfg)?;
    oracle_detect_at(grid, line.grid_cell(grid.n(), grid.m_angles()), cfg)
}

/// Largest cell within two rows and `2G` columns of `(m0, n0)`, zeroed
/// whatever its SNR.
pub fn oracle_detect_at(grid: &EmdfrftGrid, (m0, n0): (usize, usize), cfg: &MitigationConfig) -> Result<ChirpDetection> {
    let (m, n) = (grid.m_angles(), grid.n());
    let col_radius = (2 * cfg.detector.guard).min(n / 2);
    let mut best: Option<(usize, usize, f64)> = None;
    for dr in 0..=2 * ORACLE_ROW_RADIUS {
        let row = (m0 + m + dr - ORACLE_ROW_RADIUS) % m;
        for dc in 0..=2 * col_radius {
            let col = (n0 + n + dc - col_radius) % n;
            let p = grid.get(row, col).norm_sqr();
            let better = match best {
                None => true,
                Some((br, bc, bp)) => p > bp || (p == bp && (row, col) < (br, bc)),
            };
            if better {
                best = Some((row, col, p));
            }
        }
    }
    let (m_hat, n_hat, _) = best.expect("window is never empty");
    let snr_db = lo_cfar(grid.row(m_hat), n_hat, &cfg.detector)?.snr_db;
    let d = DetectionMask::zeroing(n, n_hat, cfg.detector.guard, snr_db);
    Ok(ChirpDetection::new(m_hat, n_hat, m, d))
}

/// Runs the detector-driven loop once with a fresh engine.
pub fn imfrac(
    s: &[Complex64],
    cfg: &MitigationConfig,
    basis: &DftEigenbasis,
    templates: &SupportTemplates,
) -> Result<ImfracOutput> {
    Mitigator::new(basis, templates, *cfg)?.run(s)
}
