//! Real-receiver preprocessing: digital I/Q demodulation, DC suppression,
//! band centring, FFT resampling, windowing and zero-padding.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rect,
}

impl Window {
    /// Periodic taper of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub window: Window,
    pub pad_enabled: bool,
    /// Resampling factor `num / den`.
    pub oversample_num: usize,
    pub oversample_den: usize,
    /// Zeros appended on each side.
    pub zero_pad: usize,
    /// Stop-band edge of the DC suppression, as a fraction of the band.
    pub highpass_cutoff: f64,
    /// Pass-band edge of the DC suppression.
    pub highpass_passband: f64,
    /// Shift the demodulated band by half its width so it is symmetric
    /// about zero frequency.
    pub center_band: bool,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            pad_enabled: true,
            oversample_num: 5,
            oversample_den: 4,
            zero_pad: 128,
            highpass_cutoff: 0.01,
            highpass_passband: 0.02,
            center_band: true,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self, base_len: usize) -> Result<()> {
        self.resampled_len(base_len)?;
        if !(0.0 <= self.highpass_cutoff && self.highpass_cutoff < self.highpass_passband && self.highpass_passband < 0.5) {
            return Err(Error::Config("need 0 <= highpass_cutoff < highpass_passband < 0.5".into()));
        }
        Ok(())
    }

    fn factor(&self) -> (usize, usize) {
        if self.pad_enabled {
            (self.oversample_num, self.oversample_den)
        } else {
            (1, 1)
        }
    }

    pub fn oversample_factor(&self) -> f64 {
        let (p, q) = self.factor();
        p as f64 / q as f64
    }

    pub fn pad(&self) -> usize {
        if self.pad_enabled {
            self.zero_pad
        } else {
            0
        }
    }

    /// Length after resampling, before padding.
    pub fn resampled_len(&self, base_len: usize) -> Result<usize> {
        let (p, q) = self.factor();
        if p == 0 || q == 0 || p < q {
            return Err(Error::Config("oversampling factor must be >= 1".into()));
        }
        if (base_len * p) % q != 0 {
            return Err(Error::Config(format!(
                "length {base_len} times {p}/{q} is not an integer"
            )));
        }
        Ok(base_len * p / q)
    }

    pub fn output_len(&self, base_len: usize) -> Result<usize> {
        Ok(self.resampled_len(base_len)? + 2 * self.pad())
    }

    /// Divisor that turns `cot|alpha|` into the chirp rate `k T_s^2` of a
    /// real input of `2 * base_len` samples that compresses at `alpha`
    /// after demodulation, resampling and padding.
    pub fn angle_rate_scale(&self, base_len: usize) -> Result<f64> {
        let r = self.oversample_factor();
        Ok(4.0 * self.output_len(base_len)? as f64 / (r * r))
    }
}

fn fft(x: &mut [Complex64]) {
    FftPlanner::new().plan_fft_forward(x.len()).process(x);
}

fn ifft(x: &mut [Complex64]) {
    FftPlanner::new().plan_fft_inverse(x.len()).process(x);
}

/// Upper sideband of a real signal of length `2N` as `N` complex samples.
/// A cosine of amplitude `A` at bin `b < N` becomes `A exp(j 2 pi b n / N)`.
pub fn digital_iq(s_real: &[f64]) -> Result<Vec<Complex64>> {
    if s_real.len() % 2 != 0 || s_real.is_empty() {
        return Err(Error::Config(format!("real input length {} must be even", s_real.len())));
    }
    let n = s_real.len() / 2;
    let mut x: Vec<Complex64> = s_real.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft(&mut x);
    x.truncate(n);
    ifft(&mut x);
    let scale = 1.0 / n as f64;
    x.iter_mut().for_each(|z| *z *= scale);
    Ok(x)
}

/// Gain of the DC suppression at signed normalised frequency `f` (cycles
/// per sample): zero below `cutoff`, a raised-cosine rise to one at
/// `passband`.
pub fn dc_suppress_gain(f: f64, cutoff: f64, passband: f64) -> f64 {
    let a = f.abs();
    if a < cutoff {
        0.0
    } else if a >= passband {
        1.0
    } else {
        0.5 - 0.5 * (PI * (a - cutoff) / (passband - cutoff)).cos()
    }
}

/// Zero-phase high-pass applied as a frequency mask.
pub fn dc_suppress(s: &[Complex64], cutoff: f64, passband: f64) -> Vec<Complex64> {
    let n = s.len();
    if n == 0 {
        return Vec::new();
    }
    let mut x = s.to_vec();
    fft(&mut x);
    for (k, z) in x.iter_mut().enumerate() {
        let f = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 } / n as f64;
        *z *= dc_suppress_gain(f, cutoff, passband) / n as f64;
    }
    ifft(&mut x);
    x
}

/// Shifts the spectrum by half its length (multiplication by `(-1)^n`),
/// mapping the band `[0, 1)` cycles per sample onto `[-1/2, 1/2)`.
pub fn center_band(s: &[Complex64]) -> Vec<Complex64> {
    s.iter()
        .enumerate()
        .map(|(i, &z)| if i % 2 == 0 { z } else { -z })
        .collect()
}

/// Band-limited resampling of a periodic sequence to `new_len` samples,
/// preserving tone amplitudes. A Nyquist bin is split evenly.
pub fn resample(s: &[Complex64], new_len: usize) -> Vec<Complex64> {
    let n = s.len();
    if new_len == n || n == 0 {
        return s.to_vec();
    }
    let mut x = s.to_vec();
    fft(&mut x);
    let mut y = vec![Complex64::new(0.0, 0.0); new_len];
    let keep = n.min(new_len);
    let half = keep / 2;
    for k in 0..keep.div_ceil(2) {
        y[k] = x[k];
    }
    for k in 1..=half {
        if keep % 2 == 0 && k == half {
            continue;
        }
        y[new_len - k] = x[n - k];
    }
    if keep % 2 == 0 {
        // bin keep/2 is Nyquist of the shorter sequence
        if n < new_len {
            let v = x[half] * 0.5;
            y[half] = v;
            y[new_len - half] = v;
        } else {
            y[half] = x[half] + x[n - half];
        }
    }
    ifft(&mut y);
    let scale = 1.0 / n as f64;
    y.iter_mut().for_each(|z| *z *= scale);
    y
}

/// Resample, window, then pad with zeros on both sides.
pub fn oversample_pad(s: &[Complex64], cfg: &FrontendConfig) -> Result<Vec<Complex64>> {
    let len = cfg.resampled_len(s.len())?;
    let resampled = resample(s, len);
    let w = cfg.window.coefficients(len);
    let pad = cfg.pad();
    let mut out = vec![Complex64::new(0.0, 0.0); len + 2 * pad];
    for ((o, z), wi) in out[pad..pad + len].iter_mut().zip(&resampled).zip(&w) {
        *o = z * wi;
    }
    Ok(out)
}

/// Demodulation and DC suppression of one real ramp.
pub fn receive(s_real: &[f64], cfg: &FrontendConfig) -> Result<Vec<Complex64>> {
    Ok(dc_suppress(&digital_iq(s_real)?, cfg.highpass_cutoff, cfg.highpass_passband))
}

/// Mitigation input from demodulated I/Q samples.
pub fn prepare(iq: &[Complex64], cfg: &FrontendConfig) -> Result<Vec<Complex64>> {
    if cfg.center_band {
        oversample_pad(&center_band(iq), cfg)
    } else {
        oversample_pad(iq, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peak_bin(x: &[Complex64]) -> usize {
        let mut y = x.to_vec();
        fft(&mut y);
        (0..y.len()).max_by(|&a, &b| y[a].norm().total_cmp(&y[b].norm())).unwrap()
    }

    #[test]
    fn cosine_demodulates_to_exponential() {
        let real: Vec<f64> = (0..1024).map(|n| (2.0 * PI * 40.0 * n as f64 / 1024.0).cos()).collect();
        let iq = digital_iq(&real).unwrap();
        assert_eq!(iq.len(), 512);
        for (n, z) in iq.iter().enumerate() {
            let want = Complex64::from_polar(1.0, 2.0 * PI * 40.0 * n as f64 / 512.0);
            assert!((z - want).norm() < 1e-9);
        }
        assert!(digital_iq(&real[..1023]).is_err());
        assert!(digital_iq(&[0.0; 16]).unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn upper_sideband_round_trip() {
        // s has bins 1..511 of a 1024-point grid, so Re{s} keeps them intact
        let n = 512;
        let s: Vec<Complex64> = (0..2 * n)
            .map(|i| {
                (1..n)
                    .step_by(37)
                    .map(|b| Complex64::from_polar(1.0 / b as f64, 2.0 * PI * (b * i) as f64 / (2 * n) as f64 + b as f64))
                    .sum()
            })
            .collect();
        let real: Vec<f64> = s.iter().map(|z| z.re).collect();
        let iq = digital_iq(&real).unwrap();
        for m in 0..n {
            assert!((iq[m] - s[2 * m]).norm() < 1e-9);
        }
    }

    #[test]
    fn dc_suppression_response() {
        let dc = vec![Complex64::new(3.0, -1.0); 512];
        let out = dc_suppress(&dc, 0.01, 0.02);
        let e_in: f64 = dc.iter().map(|z| z.norm_sqr()).sum();
        let e_out: f64 = out.iter().map(|z| z.norm_sqr()).sum();
        assert!(e_out <= e_in * 1e-6);
        let tone: Vec<Complex64> = (0..512).map(|n| Complex64::from_polar(1.0, 2.0 * PI * 128.0 * n as f64 / 512.0)).collect();
        let out = dc_suppress(&tone, 0.01, 0.02);
        for (a, b) in out.iter().zip(&tone) {
            assert!((a - b).norm() < 1e-9);
        }
        assert_eq!(dc_suppress_gain(0.02, 0.01, 0.02), 1.0);
        assert!(dc_suppress(&vec![Complex64::new(0.0, 0.0); 8], 0.01, 0.02).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn default_geometry_is_896() {
        let cfg = FrontendConfig::default();
        assert_eq!(cfg.output_len(512).unwrap(), 896);
        assert!((cfg.angle_rate_scale(512).unwrap() - 2293.76).abs() < 1e-9);
        let tone: Vec<Complex64> = (0..512).map(|n| Complex64::from_polar(1.0, 2.0 * PI * 40.0 * n as f64 / 512.0)).collect();
        let out = oversample_pad(&tone, &cfg).unwrap();
        assert_eq!(out.len(), 896);
        assert!(out[..128].iter().chain(&out[768..]).all(|z| z.norm() == 0.0));
        // 40 / 512 cycles per sample becomes 40 / 640, i.e. bin 56 of 896
        assert_eq!(peak_bin(&out), 56);
        assert!(oversample_pad(&vec![Complex64::new(0.0, 0.0); 512], &cfg).unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn unit_factor_without_padding_is_window_only() {
        let cfg = FrontendConfig { pad_enabled: false, ..FrontendConfig::default() };
        let s: Vec<Complex64> = (0..64).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let out = oversample_pad(&s, &cfg).unwrap();
        let w = Window::Hann.coefficients(64);
        for i in 0..64 {
            assert!((out[i] - s[i] * w[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn resampling_preserves_tones() {
        let tone: Vec<Complex64> = (0..512).map(|n| Complex64::from_polar(2.0, 2.0 * PI * -100.0 * n as f64 / 512.0 + 0.3)).collect();
        let up = resample(&tone, 640);
        for (p, z) in up.iter().enumerate() {
            let want = Complex64::from_polar(2.0, 2.0 * PI * -100.0 * p as f64 / 640.0 + 0.3);
            assert!((z - want).norm() < 1e-9);
        }
        assert!(FrontendConfig { oversample_num: 7, oversample_den: 5, ..FrontendConfig::default() }
            .resampled_len(512)
            .is_err());
    }

    #[test]
    fn centring_moves_band() {
        let tone: Vec<Complex64> = (0..64).map(|n| Complex64::from_polar(1.0, 2.0 * PI * 5.0 * n as f64 / 64.0)).collect();
        assert_eq!(peak_bin(&center_band(&tone)), 37);
    }
}
