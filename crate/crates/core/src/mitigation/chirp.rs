//! Chirp geometry in the centred time-frequency plane of an `N`-point
//! signal, and the angle/position a chirp compresses to.
//!
//! Time is measured in centred samples `c in [-N/2, N/2)` (sample `c mod N`
//! of the buffer) and frequency in DFT bins. With equal scaling on both axes
//! the transform at angle `alpha` compresses the chirp whose instantaneous
//! frequency is `f(c) = -cot(alpha) c + u csc(alpha)` into a peak at centred
//! position `u`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A linear-FM trace: `f(c) = slope (c - t0) + f0` bins at centred sample `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpLine {
    /// Bins per sample.
    pub slope: f64,
    pub t0: f64,
    pub f0: f64,
}

impl ChirpLine {
    /// Angle in `(-pi/2, pi/2]` at which the line compresses (`cot = -slope`).
    pub fn compressing_angle(&self) -> f64 {
        let a = 1.0_f64.atan2(-self.slope);
        if a > PI / 2.0 {
            a - PI
        } else {
            a
        }
    }

    /// Centred peak position in the compressing domain.
    pub fn compressed_position(&self) -> f64 {
        let a = self.compressing_angle();
        self.f0 * a.sin() + self.t0 * a.cos()
    }

    /// Nearest `(row, column)` of an `M`-angle grid of length `n`.
    pub fn grid_cell(&self, n: usize, m_angles: usize) -> (usize, usize) {
        let m = angle_to_row(self.compressing_angle(), m_angles);
        let u = self.compressed_position().round() as i64;
        (m, u.rem_euclid(n as i64) as usize)
    }
}

/// Nearest grid row for an angle.
pub fn angle_to_row(alpha: f64, m_angles: usize) -> usize {
    let r = (alpha * m_angles as f64 / (2.0 * PI)).round() as i64;
    r.rem_euclid(m_angles as i64) as usize
}

/// Centred value of an index in `0..n`.
pub fn centred(i: usize, n: usize) -> f64 {
    if i >= n.div_ceil(2) {
        i as f64 - n as f64
    } else {
        i as f64
    }
}

/// Radius, as a fraction of `N`, of the time-frequency disc inside which the
/// basis compresses a chirp into a few samples. Traces further out spread.
pub const COMPRESSION_RADIUS: f64 = 0.4;

/// Unit-energy chirp that the transform at `alpha` compresses to column
/// `n_hat`.
///
/// The chirp is kept where its instantaneous frequency lies inside the band
/// `|f| < N/2` and its trace inside the disc of radius
/// [`COMPRESSION_RADIUS`]` * N`. At `alpha = pi/2 (mod pi)` the transform is
/// the DFT and the full-length tone is returned.
pub fn chirp_at_angle(alpha: f64, n_hat: usize, n: usize) -> Result<Vec<Complex64>> {
    let radius = if (alpha.cos() / alpha.sin()).abs() < 1e-12 {
        f64::INFINITY
    } else {
        COMPRESSION_RADIUS * n as f64
    };
    chirp_in_disc(alpha, n_hat, n, radius)
}

/// As [`chirp_at_angle`] with the time-frequency support limited to a disc
/// of `radius` samples.
pub fn chirp_in_disc(alpha: f64, n_hat: usize, n: usize, radius: f64) -> Result<Vec<Complex64>> {
    let (s, c) = alpha.sin_cos();
    if !alpha.is_finite() || s.abs() < 1e-9 {
        return Err(Error::DegenerateAngle(alpha));
    }
    if n_hat >= n {
        return Err(Error::Config(format!("position {n_hat} outside length {n}")));
    }
    let cot = c / s;
    let csc = 1.0 / s;
    let u = centred(n_hat, n);
    let half = n as f64 / 2.0;
    let nf = n as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (i, o) in out.iter_mut().enumerate() {
        let t = centred(i, n);
        let f = -cot * t + u * csc;
        if f.abs() >= half || t * t + f * f >= radius * radius {
            continue;
        }
        let phase = PI * (-cot * t * t + 2.0 * u * csc * t) / nf;
        *o = Complex64::from_polar(1.0, phase);
    }
    let energy: f64 = out.iter().map(|z| z.norm_sqr()).sum();
    if energy == 0.0 {
        return Err(Error::DegenerateAngle(alpha));
    }
    let scale = 1.0 / energy.sqrt();
    out.iter_mut().for_each(|z| *z *= scale);
    Ok(out)
}
