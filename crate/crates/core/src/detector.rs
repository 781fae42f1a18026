//! Least-of CFAR test of a single cell in a fractional-domain row, and the
//! binary zeroing mask it produces.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default guard cells per side.
pub const DEFAULT_GUARD: usize = 20;
/// Default detection threshold.
pub const DEFAULT_BETA_DB: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Noise window length per side.
    pub phi: usize,
    /// Guard cells per side.
    pub guard: usize,
    pub beta_db: f64,
}

impl DetectorConfig {
    /// Noise window that fills the row: `phi = N/2 - G - 1`.
    pub fn full_window(n: usize, guard: usize, beta_db: f64) -> Self {
        Self {
            phi: (n / 2).saturating_sub(guard + 1),
            guard,
            beta_db,
        }
    }

    /// `G = 20`, `beta = 20 dB`, `phi = N/2 - G - 1`.
    pub fn default_for(n: usize) -> Self {
        Self::full_window(n, DEFAULT_GUARD, DEFAULT_BETA_DB)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.phi < 1 {
            return Err(Error::Config("detector window phi must be >= 1".into()));
        }
        if 2 * (self.phi + self.guard) + 1 > n {
            return Err(Error::Config(format!(
                "detector windows overlap: 2*(phi + G) + 1 = {} > N = {n}",
                2 * (self.phi + self.guard) + 1
            )));
        }
        if !self.beta_db.is_finite() {
            return Err(Error::Config("detector threshold must be finite".into()));
        }
        Ok(())
    }
}

/// Outcome of one LO-CFAR test. `d[i] == false` marks a cell to be zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMask {
    pub d: Vec<bool>,
    pub detected: bool,
    pub snr_db: f64,
    pub center: usize,
}

impl DetectionMask {
    pub fn pass_all(n: usize, center: usize, snr_db: f64) -> Self {
        Self {
            d: vec![true; n],
            detected: false,
            snr_db,
            center,
        }
    }

    /// Zeroes `center +- guard` circularly.
    pub fn zeroing(n: usize, center: usize, guard: usize, snr_db: f64) -> Self {
        let mut d = vec![true; n];
        for off in 0..=2 * guard {
            d[(center + n - guard % n + off) % n] = false;
        }
        Self {
            d,
            detected: true,
            snr_db,
            center,
        }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Indices where `d` is zero.
    pub fn zeroed(&self) -> impl Iterator<Item = usize> + '_ {
        self.d.iter().enumerate().filter(|(_, &keep)| !keep).map(|(i, _)| i)
    }
}

/// Least-of CFAR on `row` at `n_hat`.
///
/// The noise power is the smaller of the mean powers of the `phi` cells
/// before and after the tested cell, each window starting `guard + 1` cells
/// away. Indexing is circular.
pub fn lo_cfar(row: &[Complex64], n_hat: usize, cfg: &DetectorConfig) -> Result<DetectionMask> {
    let n = row.len();
    cfg.validate(n)?;
    if n_hat >= n {
        return Err(Error::Config(format!("cell {n_hat} outside row of length {n}")));
    }
    let start = cfg.guard + 1;
    let mut lead = 0.0;
    let mut lag = 0.0;
    for off in start..start + cfg.phi {
        lead += row[(n_hat + n - off) % n].norm_sqr();
        lag += row[(n_hat + off) % n].norm_sqr();
    }
    let noise = lead.min(lag) / cfg.phi as f64;
    let cell = row[n_hat].norm_sqr();
    let snr_db = if noise > 0.0 {
        10.0 * (cell / noise).log10()
    } else if cell > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    Ok(if snr_db >= cfg.beta_db {
        DetectionMask::zeroing(n, n_hat, cfg.guard, snr_db)
    } else {
        DetectionMask::pass_all(n, n_hat, snr_db)
    })
}

/// `d . row`.
pub fn apply_mask(row: &[Complex64], mask: &DetectionMask) -> Result<Vec<Complex64>> {
    if row.len() != mask.len() {
        return Err(Error::LengthMismatch {
            expected: mask.len(),
            got: row.len(),
        });
    }
    Ok(row
        .iter()
        .zip(&mask.d)
        .map(|(&z, &keep)| if keep { z } else { Complex64::new(0.0, 0.0) })
        .collect())
}

/// `(1 - d) . row` as a sparse list of `(index, value)`.
pub fn masked_out(row: &[Complex64], mask: &DetectionMask) -> Vec<(usize, Complex64)> {
    mask.zeroed().map(|i| (i, row[i])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn table_one_window() {
        assert_eq!(DetectorConfig::default_for(896).phi, 427);
        assert_eq!(DetectorConfig::default_for(896).guard, 20);
        DetectorConfig::default_for(896).validate(896).unwrap();
    }

    #[test]
    fn overlapping_windows_rejected() {
        let cfg = DetectorConfig { phi: 10, guard: 3, beta_db: 20.0 };
        assert!(cfg.validate(26).is_err());
        assert!(cfg.validate(27).is_ok());
        let row = vec![c(1.0); 20];
        assert!(lo_cfar(&row, 0, &cfg).is_err());
    }

    #[test]
    fn strong_cell_detected() {
        let n = 128;
        let cfg = DetectorConfig::full_window(n, 5, 20.0);
        let mut row = vec![c(1.0); n];
        row[40] = c(100.0);
        let d = lo_cfar(&row, 40, &cfg).unwrap();
        assert!(d.detected);
        assert!((d.snr_db - 40.0).abs() < 1e-9);
        assert_eq!(d.zeroed().count(), 11);
        assert!(d.zeroed().all(|i| (35..=45).contains(&i)));
    }

    #[test]
    fn flat_row_not_detected() {
        let row = vec![c(3.0); 64];
        let d = lo_cfar(&row, 7, &DetectorConfig::full_window(64, 4, 20.0)).unwrap();
        assert!(!d.detected);
        assert!(d.d.iter().all(|&k| k));
        assert!(d.snr_db.abs() < 1e-12);
    }

    #[test]
    fn least_of_uses_quieter_side() {
        let n = 64;
        let cfg = DetectorConfig { phi: 8, guard: 2, beta_db: 20.0 };
        let mut row = vec![c(1.0); n];
        for i in 21..30 {
            row[i] = c(10.0);
        }
        row[32] = c(20.0);
        // lagging side is at unit power, so SNR = 400 / 1
        let d = lo_cfar(&row, 32, &cfg).unwrap();
        assert!((d.snr_db - 10.0 * 400f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn circular_zeroing_at_origin() {
        let n = 32;
        let cfg = DetectorConfig { phi: 4, guard: 2, beta_db: 10.0 };
        let mut row = vec![c(1.0); n];
        row[0] = c(50.0);
        let d = lo_cfar(&row, 0, &cfg).unwrap();
        let zeroed: Vec<usize> = d.zeroed().collect();
        assert_eq!(zeroed, vec![0, 1, 2, 30, 31]);
    }

    #[test]
    fn mask_partition() {
        let row: Vec<Complex64> = (0..16).map(|i| Complex64::new(i as f64, -(i as f64))).collect();
        let d = DetectionMask::zeroing(16, 3, 2, 30.0);
        let kept = apply_mask(&row, &d).unwrap();
        let mut rebuilt = kept.clone();
        for (i, v) in masked_out(&row, &d) {
            rebuilt[i] += v;
        }
        assert_eq!(rebuilt, row);
        let all = DetectionMask::pass_all(16, 0, 0.0);
        assert_eq!(apply_mask(&row, &all).unwrap(), row);
    }
}
