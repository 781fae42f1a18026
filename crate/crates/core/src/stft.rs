//! Short-time Fourier transform with a Hann window, and ridge tracking for
//! linear chirps.

use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::frontend::Window;

/// Frame-major spectrogram. Bin `b` holds the frequency `signed(b) / nfft`
/// cycles per sample, with bins above `nfft / 2` negative.
#[derive(Debug, Clone)]
pub struct Stft {
    pub win_len: usize,
    pub hop: usize,
    pub nfft: usize,
    pub frames: usize,
    pub data: Vec<Complex64>,
}

impl Stft {
    pub fn compute(x: &[Complex64], win_len: usize, hop: usize, nfft: usize) -> Result<Self> {
        if win_len == 0 || hop == 0 || nfft < win_len {
            return Err(Error::Config(format!("bad STFT geometry win={win_len} hop={hop} nfft={nfft}")));
        }
        if x.len() < win_len {
            return Err(Error::TooShort(x.len(), win_len));
        }
        let frames = (x.len() - win_len) / hop + 1;
        let w = Window::Hann.coefficients(win_len);
        let fft = FftPlanner::new().plan_fft_forward(nfft);
        let mut data = vec![Complex64::new(0.0, 0.0); frames * nfft];
        for (f, out) in data.chunks_exact_mut(nfft).enumerate() {
            let start = f * hop;
            for (i, o) in out.iter_mut().take(win_len).enumerate() {
                *o = x[start + i] * w[i];
            }
            fft.process(out);
        }
        Ok(Self { win_len, hop, nfft, frames, data })
    }

    pub fn frame(&self, f: usize) -> &[Complex64] {
        &self.data[f * self.nfft..(f + 1) * self.nfft]
    }

    /// Centre sample of frame `f`.
    pub fn frame_time(&self, f: usize) -> f64 {
        (f * self.hop) as f64 + (self.win_len as f64 - 1.0) / 2.0
    }

    pub fn bin_frequency(&self, b: usize) -> f64 {
        let s = if b > self.nfft / 2 { b as f64 - self.nfft as f64 } else { b as f64 };
        s / self.nfft as f64
    }

    /// Per-frame peak frequency, refined by a parabola through the log
    /// magnitudes, for frames whose peak power is at least `rel_power`
    /// times the strongest frame peak.
    pub fn ridge(&self, rel_power: f64) -> Vec<(f64, f64)> {
        let peaks: Vec<(usize, f64)> = (0..self.frames)
            .map(|f| {
                self.frame(f)
                    .iter()
                    .enumerate()
                    .map(|(b, z)| (b, z.norm_sqr()))
                    .fold((0, -1.0), |a, c| if c.1 > a.1 { c } else { a })
            })
            .collect();
        let top = peaks.iter().map(|p| p.1).fold(0.0, f64::max);
        let n = self.nfft;
        peaks
            .iter()
            .enumerate()
            .filter(|(_, p)| top > 0.0 && p.1 >= rel_power * top)
            .map(|(f, &(b, _))| {
                let row = self.frame(f);
                let l = row[(b + n - 1) % n].norm().max(1e-300).ln();
                let c = row[b].norm().max(1e-300).ln();
                let r = row[(b + 1) % n].norm().max(1e-300).ln();
                let den = l - 2.0 * c + r;
                let offset = if den.abs() > 1e-12 { 0.5 * (l - r) / den } else { 0.0 };
                (self.frame_time(f), self.bin_frequency(b) + offset / n as f64)
            })
            .collect()
    }

    /// `time_sample,frequency,magnitude_db` rows with frequencies ascending
    /// within each frame.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time_sample,frequency,magnitude_db")?;
        let half = self.nfft / 2;
        for f in 0..self.frames {
            let row = self.frame(f);
            let t = self.frame_time(f);
            for i in 0..self.nfft {
                let b = (i + half + 1) % self.nfft;
                let db = 20.0 * row[b].norm().max(1e-300).log10();
                writeln!(w, "{t},{},{db:.3}", self.bin_frequency(b))?;
            }
        }
        Ok(())
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooShort(points.len(), 2));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("slope fit over a single abscissa".into()));
    }
    Ok(sxy / sxx)
}
