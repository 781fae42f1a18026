//! Frame processing chains from real ramps to range-Doppler maps: the plain
//! FFT chain, the fractional-domain mitigation chain and the baseline
//! mitigation methods.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::eigenbasis::DftEigenbasis;
use crate::error::{Error, Result};
use crate::frontend::{prepare, receive, FrontendConfig, Window};
use crate::mitigation::{ChirpLine, ImfracOutput, MitigationConfig, Mitigator, SupportTemplates};
use crate::provenance::hash_config;
use crate::sigmodel::{InterferenceParams, RadarCube};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Imfrac,
    ImfracOracle,
    Zeroing,
    ZeroingOracle,
    Rampfilter,
    None,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Imfrac,
        Method::ImfracOracle,
        Method::Zeroing,
        Method::ZeroingOracle,
        Method::Rampfilter,
        Method::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Imfrac => "imfrac",
            Method::ImfracOracle => "imfrac-oracle",
            Method::Zeroing => "zeroing",
            Method::ZeroingOracle => "zeroing-oracle",
            Method::Rampfilter => "rampfilter",
            Method::None => "none",
        }
    }

    pub fn needs_mitigator(self) -> bool {
        matches!(self, Method::Imfrac | Method::ImfracOracle)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LowpassMode {
    Off,
    WhenDetected,
    Always,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeConfig {
    /// Moving-average length of the envelope.
    pub average_len: usize,
    /// Threshold `median + c * 1.4826 * MAD`.
    pub mad_factor: f64,
    /// Samples added on each side of a flagged run.
    pub dilation: usize,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self { average_len: 8, mad_factor: 5.0, dilation: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub frontend: FrontendConfig,
    pub mitigation: MitigationConfig,
    pub range_window: Window,
    pub doppler_window: Window,
    pub lowpass: LowpassMode,
    pub envelope: EnvelopeConfig,
    pub ramp_filter_len: usize,
}

impl ChainConfig {
    /// Defaults for real ramps of `2 * base_len` samples.
    pub fn default_for(base_len: usize) -> Result<Self> {
        let frontend = FrontendConfig::default();
        let n = frontend.output_len(base_len)?;
        Ok(Self {
            frontend,
            mitigation: MitigationConfig::default_for(n),
            range_window: Window::Hann,
            doppler_window: Window::Hann,
            lowpass: LowpassMode::Off,
            envelope: EnvelopeConfig::default(),
            ramp_filter_len: 3,
        })
    }
}

/// Provenance carried with every map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub chain: String,
    pub config_hash: String,
    pub stage_hashes: BTreeMap<String, String>,
    pub detections: usize,
    pub grid_builds: usize,
    pub updating_iterations: usize,
    pub non_converged_ramps: usize,
    pub skipped_oracle_chirps: usize,
    pub notes: Vec<String>,
}

/// Complex range-Doppler map, Doppler-major: `data[d * n_range + r]`.
/// Doppler is FFT-shifted so zero velocity sits at `n_doppler / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RdMap {
    pub n_range: usize,
    pub n_doppler: usize,
    pub data: Vec<Complex64>,
    pub provenance: Provenance,
}

impl RdMap {
    #[inline]
    pub fn get(&self, range: usize, doppler: usize) -> Complex64 {
        self.data[doppler * self.n_range + range]
    }

    /// Cell of largest magnitude.
    pub fn peak(&self) -> (usize, usize) {
        let i = (0..self.data.len())
            .max_by(|&a, &b| self.data[a].norm_sqr().total_cmp(&self.data[b].norm_sqr()))
            .unwrap_or(0);
        (i % self.n_range, i / self.n_range)
    }
}

fn fft_in_place(x: &mut [Complex64]) {
    FftPlanner::new().plan_fft_forward(x.len()).process(x);
}

/// Time samples of a unitary spectrum.
pub fn unitary_idft(spectrum: &[Complex64]) -> Vec<Complex64> {
    let mut x = spectrum.to_vec();
    FftPlanner::new().plan_fft_inverse(x.len()).process(&mut x);
    let scale = 1.0 / (x.len() as f64).sqrt();
    x.iter_mut().for_each(|z| *z *= scale);
    x
}

/// Windowed FFT of one I/Q ramp.
pub fn range_spectrum(iq: &[Complex64], window: Window) -> Vec<Complex64> {
    let w = window.coefficients(iq.len());
    let mut x: Vec<Complex64> = iq.iter().zip(&w).map(|(z, wi)| z * wi).collect();
    fft_in_place(&mut x);
    x
}

/// Windowed slow-time FFT per range bin, FFT-shifted.
pub fn doppler_process(range_spectra: &[Vec<Complex64>], window: Window) -> Result<RdMap> {
    let n_doppler = range_spectra.len();
    let n_range = range_spectra.first().map_or(0, Vec::len);
    if range_spectra.iter().any(|s| s.len() != n_range) {
        return Err(Error::LengthMismatch { expected: n_range, got: 0 });
    }
    let w = window.coefficients(n_doppler);
    let plan = FftPlanner::new().plan_fft_forward(n_doppler.max(1));
    let mut data = vec![Complex64::new(0.0, 0.0); n_range * n_doppler];
    let mut col = vec![Complex64::new(0.0, 0.0); n_doppler];
    for r in 0..n_range {
        for (d, c) in col.iter_mut().enumerate() {
            *c = range_spectra[d][r] * w[d];
        }
        plan.process(&mut col);
        for d in 0..n_doppler {
            data[((d + n_doppler / 2) % n_doppler) * n_range + r] = col[d];
        }
    }
    Ok(RdMap { n_range, n_doppler, data, provenance: Provenance::default() })
}

/// Plain chain on demodulated ramps: range FFT, then Doppler FFT.
pub fn process_reference(iq_ramps: &[Vec<Complex64>], cfg: &ChainConfig) -> Result<RdMap> {
    let spectra: Vec<Vec<Complex64>> = iq_ramps.iter().map(|x| range_spectrum(x, cfg.range_window)).collect();
    let mut map = doppler_process(&spectra, cfg.doppler_window)?;
    map.provenance.chain = "reference".into();
    Ok(map)
}

/// Maps a padded, unnormalised range spectrum back onto the bin grid of the
/// unpadded chain.
pub fn crop(spectrum: &[Complex64], cfg: &FrontendConfig, base_len: usize) -> Result<Vec<Complex64>> {
    let total = cfg.output_len(base_len)?;
    if spectrum.len() != total {
        return Err(Error::LengthMismatch { expected: total, got: spectrum.len() });
    }
    if !cfg.pad_enabled && !cfg.center_band {
        return Ok(spectrum.to_vec());
    }
    let len = cfg.resampled_len(base_len)?;
    let pad = cfg.pad();
    let mut x = spectrum.to_vec();
    FftPlanner::new().plan_fft_inverse(total).process(&mut x);
    let mut seg: Vec<Complex64> = x[pad..pad + len].iter().map(|z| z / total as f64).collect();
    fft_in_place(&mut seg);
    let scale = base_len as f64 / len as f64;
    let half = (base_len / 2) as i64;
    Ok((0..base_len)
        .map(|b| {
            let b = b as i64;
            let k = if cfg.center_band {
                b - half
            } else if b < half {
                b
            } else {
                b - base_len as i64
            };
            seg[k.rem_euclid(len as i64) as usize] * scale
        })
        .collect())
}

/// Circular convolution with `[1/4, 1/2, 1/4]`.
pub fn lowpass(spectrum: &[Complex64]) -> Vec<Complex64> {
    let n = spectrum.len();
    (0..n)
        .map(|i| 0.5 * spectrum[i] + 0.25 * (spectrum[(i + n - 1) % n] + spectrum[(i + 1) % n]))
        .collect()
}

/// Samples flagged by the envelope detector.
pub fn envelope_flags(iq: &[Complex64], cfg: &EnvelopeConfig) -> Vec<bool> {
    let n = iq.len();
    if n == 0 {
        return Vec::new();
    }
    let len = cfg.average_len.max(1);
    let mag: Vec<f64> = iq.iter().map(|z| z.norm()).collect();
    let env: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(len / 2);
            let hi = (lo + len).min(n);
            mag[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let med = median(&env);
    let dev: Vec<f64> = env.iter().map(|v| (v - med).abs()).collect();
    let thr = med + cfg.mad_factor * 1.4826 * median(&dev);
    let mut flags = vec![false; n];
    for i in (0..n).filter(|&i| env[i] > thr) {
        let lo = i.saturating_sub(cfg.dilation);
        let hi = (i + cfg.dilation + 1).min(n);
        flags[lo..hi].iter_mut().for_each(|f| *f = true);
    }
    flags
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Replaces each ramp's magnitude by the minimum over a centred window of
/// ramps, keeping its phase.
pub fn ramp_filter(range_spectra: &[Vec<Complex64>], window: usize) -> Result<Vec<Vec<Complex64>>> {
    let r = range_spectra.len();
    if window == 0 || r < window.max(3) {
        return Err(Error::Config(format!("ramp filter needs at least {} ramps, got {r}", window.max(3))));
    }
    let half = window / 2;
    Ok((0..r)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + window - half).min(r);
            range_spectra[i]
                .iter()
                .enumerate()
                .map(|(b, z)| {
                    let m = (lo..hi).map(|j| range_spectra[j][b].norm()).fold(f64::INFINITY, f64::min);
                    let a = z.norm();
                    if a > 0.0 {
                        z * (m / a)
                    } else {
                        *z
                    }
                })
                .collect()
        })
        .collect())
}

/// Time-frequency lines of the two arms an interferer leaves in the
/// prepared mitigation input of one ramp, in centred samples and bins of
/// the padded length. Arms outside the ramp are omitted.
pub fn interference_lines(
    p: &InterferenceParams,
    ramp: usize,
    n_fast_real: usize,
    t_s: f64,
    cfg: &FrontendConfig,
) -> Result<Vec<ChirpLine>> {
    if !p.present.get(ramp).copied().unwrap_or(false) {
        return Ok(Vec::new());
    }
    let base = n_fast_real / 2;
    let n = cfg.output_len(base)? as f64;
    let r = cfg.oversample_factor();
    let n_tau = p.tau_at(ramp) / t_s;
    let half = p.bandwidth / p.chirp_rate.abs() / t_s;
    let t0 = r * n_tau / 2.0 + cfg.pad() as f64 - n / 2.0;
    let f0 = if cfg.center_band { -n / (2.0 * r) } else { 0.0 };
    let slope = 4.0 * n * p.normalized_rate(t_s).abs() / (r * r);
    let mut lines = Vec::new();
    // arm after the crossing rises, arm before it falls
    if n_tau < n_fast_real as f64 && n_tau + half > 0.0 {
        lines.push(ChirpLine { slope, t0, f0 });
    }
    if n_tau > 0.0 && n_tau - half < n_fast_real as f64 {
        lines.push(ChirpLine { slope: -slope, t0, f0 });
    }
    Ok(lines)
}

/// Per-frame counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub detections: usize,
    pub grid_builds: usize,
    pub updating_iterations: usize,
    pub non_converged_ramps: usize,
    pub skipped_oracle_chirps: usize,
}

impl RunStats {
    fn add(&mut self, o: &RunStats) {
        self.detections += o.detections;
        self.grid_builds += o.grid_builds;
        self.updating_iterations += o.updating_iterations;
        self.non_converged_ramps += o.non_converged_ramps;
        self.skipped_oracle_chirps += o.skipped_oracle_chirps;
    }

    fn from_output(out: &ImfracOutput) -> Self {
        Self {
            detections: out.detection_count(),
            grid_builds: out.grid_builds,
            updating_iterations: out.updating_iterations(),
            non_converged_ramps: usize::from(!out.converged),
            skipped_oracle_chirps: 0,
        }
    }
}

/// Frame processor for one chain configuration.
pub struct Pipeline<'a> {
    cfg: ChainConfig,
    base_len: usize,
    mitigator: Option<Mitigator<'a>>,
}

impl<'a> Pipeline<'a> {
    /// Chain without the fractional-domain method.
    pub fn baseline(cfg: &ChainConfig, base_len: usize) -> Result<Self> {
        cfg.frontend.validate(base_len)?;
        Ok(Self { cfg: *cfg, base_len, mitigator: None })
    }

    pub fn new(
        cfg: &ChainConfig,
        base_len: usize,
        basis: &'a DftEigenbasis,
        templates: &'a SupportTemplates,
    ) -> Result<Self> {
        cfg.frontend.validate(base_len)?;
        let n = cfg.frontend.output_len(base_len)?;
        if basis.n() != n {
            return Err(Error::Config(format!("basis length {} but padded length {n}", basis.n())));
        }
        Ok(Self { cfg: *cfg, base_len, mitigator: Some(Mitigator::new(basis, templates, cfg.mitigation)?) })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn mitigator(&self) -> Result<&Mitigator<'a>> {
        self.mitigator
            .as_ref()
            .ok_or_else(|| Error::Config("pipeline was built without a mitigation engine".into()))
    }

    fn check_ramp(&self, real: &[f64]) -> Result<()> {
        if real.len() != 2 * self.base_len {
            return Err(Error::LengthMismatch { expected: 2 * self.base_len, got: real.len() });
        }
        Ok(())
    }

    /// Mitigation input for one real ramp.
    pub fn prepared(&self, real: &[f64]) -> Result<Vec<Complex64>> {
        self.check_ramp(real)?;
        prepare(&receive(real, &self.cfg.frontend)?, &self.cfg.frontend)
    }

    /// Unnormalised padded spectrum to range bins of the plain chain.
    pub fn finish(&self, unitary: &[Complex64], detected: bool) -> Result<Vec<Complex64>> {
        let scale = (unitary.len() as f64).sqrt();
        let scaled: Vec<Complex64> = unitary.iter().map(|z| z * scale).collect();
        let cropped = crop(&scaled, &self.cfg.frontend, self.base_len)?;
        Ok(match self.cfg.lowpass {
            LowpassMode::Always => lowpass(&cropped),
            LowpassMode::WhenDetected if detected => lowpass(&cropped),
            _ => cropped,
        })
    }

    /// Range spectrum of one ramp after detector-driven mitigation.
    pub fn imfrac_ramp(&self, real: &[f64]) -> Result<(Vec<Complex64>, ImfracOutput)> {
        let out = self.mitigator()?.run(&self.prepared(real)?)?;
        let spec = self.finish(&out.spectrum, out.detection_count() > 0)?;
        Ok((spec, out))
    }

    /// Range spectrum of one ramp after zeroing at the given grid cells.
    pub fn imfrac_oracle_ramp(&self, real: &[f64], cells: &[(usize, usize)]) -> Result<(Vec<Complex64>, ImfracOutput)> {
        let out = self.mitigator()?.run_oracle_at(&self.prepared(real)?, cells)?;
        let spec = self.finish(&out.spectrum, !cells.is_empty())?;
        Ok((spec, out))
    }

    /// Range spectrum of `component` under the zeroing decisions of `run`.
    pub fn replay_ramp(&self, component_real: &[f64], run: &ImfracOutput) -> Result<Vec<Complex64>> {
        let spec = self.mitigator()?.replay(&self.prepared(component_real)?, run)?;
        self.finish(&spec, run.detection_count() > 0)
    }

    /// Grid cells where each arm of every active interferer peaks on one
    /// ramp, found by passing the isolated arm through the frontend, and the
    /// number of arms outside the searched angles.
    pub fn oracle_cells(&self, cube: &RadarCube, ramp: usize) -> Result<(Vec<(usize, usize)>, usize)> {
        let c = &cube.config;
        let mitigator = self.mitigator()?;
        let mut cells = Vec::new();
        let mut skipped = 0;
        for p in &c.interferers {
            let lines = interference_lines(p, ramp, c.n_fast, c.t_s, &self.cfg.frontend)?;
            if lines.iter().any(|l| l.compressing_angle().abs() > self.cfg.mitigation.alpha_max) {
                skipped += lines.len();
                continue;
            }
            let samples = p.ramp_samples(ramp, c.n_fast, c.t_s);
            let split = ((p.tau_at(ramp) / c.t_s).ceil().max(0.0) as usize).min(c.n_fast);
            for arm in [0..split, split..c.n_fast] {
                let mut real = vec![0.0; c.n_fast];
                for i in arm {
                    real[i] = samples[i].re;
                }
                if let Some(cell) = mitigator.peak_cell(&self.prepared(&real)?)? {
                    cells.push(cell);
                }
            }
        }
        Ok((cells, skipped))
    }

    fn ramp_spectrum(&self, cube: &RadarCube, real: &[f64], ramp: usize, method: Method) -> Result<(Vec<Complex64>, RunStats)> {
        let cfg = &self.cfg;
        match method {
            Method::None => Ok((range_spectrum(&receive(real, &cfg.frontend)?, cfg.range_window), RunStats::default())),
            Method::Imfrac => {
                let (s, out) = self.imfrac_ramp(real)?;
                Ok((s, RunStats::from_output(&out)))
            }
            Method::ImfracOracle => {
                let (cells, skipped) = self.oracle_cells(cube, ramp)?;
                let (s, out) = self.imfrac_oracle_ramp(real, &cells)?;
                let mut st = RunStats::from_output(&out);
                st.skipped_oracle_chirps = skipped;
                Ok((s, st))
            }
            Method::ZeroingOracle => {
                let mut x = real.to_vec();
                for p in &cube.config.interferers {
                    if p.present.get(ramp).copied().unwrap_or(false) {
                        for i in p.support(ramp, cube.config.n_fast, cube.config.t_s) {
                            x[i] = 0.0;
                        }
                    }
                }
                Ok((range_spectrum(&receive(&x, &cfg.frontend)?, cfg.range_window), RunStats::default()))
            }
            Method::Zeroing => {
                let mut iq = receive(real, &cfg.frontend)?;
                let flags = envelope_flags(&iq, &cfg.envelope);
                let mut st = RunStats::default();
                for (z, f) in iq.iter_mut().zip(&flags) {
                    if *f {
                        *z = Complex64::new(0.0, 0.0);
                        st.detections += 1;
                    }
                }
                Ok((range_spectrum(&iq, cfg.range_window), st))
            }
            Method::Rampfilter => unreachable!("handled per frame"),
        }
    }

    /// Runs `method` on every ramp of a frame and forms the map.
    pub fn process(&self, cube: &RadarCube, method: Method) -> Result<(RdMap, RunStats)> {
        self.process_real(cube, &cube.received_real(), method)
    }

    /// As [`process`](Self::process) on replacement real samples, with the
    /// frame's ground truth still available to the oracle methods.
    pub fn process_real(&self, cube: &RadarCube, real: &[f64], method: Method) -> Result<(RdMap, RunStats)> {
        let n_fast = cube.config.n_fast;
        if n_fast != 2 * self.base_len || real.len() != n_fast * cube.config.n_ramps {
            return Err(Error::LengthMismatch { expected: 2 * self.base_len * cube.config.n_ramps, got: real.len() });
        }
        let inner = if method == Method::Rampfilter { Method::None } else { method };
        let per_ramp: Vec<(Vec<Complex64>, RunStats)> = (0..cube.config.n_ramps)
            .into_par_iter()
            .map(|r| self.ramp_spectrum(cube, &real[r * n_fast..(r + 1) * n_fast], r, inner))
            .collect::<Result<_>>()?;
        let mut stats = RunStats::default();
        let mut spectra = Vec::with_capacity(per_ramp.len());
        for (s, st) in per_ramp {
            stats.add(&st);
            spectra.push(s);
        }
        if method == Method::Rampfilter {
            spectra = ramp_filter(&spectra, self.cfg.ramp_filter_len)?;
        }
        let mut map = doppler_process(&spectra, self.cfg.doppler_window)?;
        map.provenance = self.provenance(method, &stats)?;
        Ok((map, stats))
    }

    fn provenance(&self, method: Method, stats: &RunStats) -> Result<Provenance> {
        let cfg = &self.cfg;
        let mut stage_hashes = BTreeMap::new();
        stage_hashes.insert("frontend".into(), hash_config(&cfg.frontend)?);
        stage_hashes.insert("range_window".into(), hash_config(&cfg.range_window)?);
        stage_hashes.insert("doppler_window".into(), hash_config(&cfg.doppler_window)?);
        match method {
            Method::Imfrac | Method::ImfracOracle => {
                stage_hashes.insert("mitigation".into(), hash_config(&cfg.mitigation)?);
                stage_hashes.insert("lowpass".into(), hash_config(&cfg.lowpass)?);
            }
            Method::Zeroing => {
                stage_hashes.insert("envelope".into(), hash_config(&cfg.envelope)?);
            }
            Method::Rampfilter => {
                stage_hashes.insert("ramp_filter_len".into(), hash_config(&cfg.ramp_filter_len)?);
            }
            Method::ZeroingOracle | Method::None => {}
        }
        let mut notes = Vec::new();
        if method == Method::ImfracOracle {
            notes.push("oracle detection is a window-restricted, threshold-free stand-in around cells calibrated on the isolated interference arms".into());
        }
        if stats.non_converged_ramps > 0 {
            notes.push(format!("{} ramps hit the outer-iteration bound", stats.non_converged_ramps));
        }
        Ok(Provenance {
            chain: method.as_str().into(),
            config_hash: hash_config(cfg)?,
            stage_hashes,
            detections: stats.detections,
            grid_builds: stats.grid_builds,
            updating_iterations: stats.updating_iterations,
            non_converged_ramps: stats.non_converged_ramps,
            skipped_oracle_chirps: stats.skipped_oracle_chirps,
            notes,
        })
    }

    /// Interference-free map for evaluation: objects plus noise through the
    /// plain chain.
    pub fn reference_map(&self, cube: &RadarCube) -> Result<RdMap> {
        let n_fast = cube.config.n_fast;
        let clean: Vec<f64> = cube.objects.data.iter().zip(&cube.noise.data).map(|(o, n)| (o + n).re).collect();
        let iq: Vec<Vec<Complex64>> = clean
            .chunks(n_fast)
            .map(|r| receive(r, &self.cfg.frontend))
            .collect::<Result<_>>()?;
        let mut map = process_reference(&iq, &self.cfg)?;
        map.provenance.config_hash = hash_config(&self.cfg)?;
        Ok(map)
    }
}
