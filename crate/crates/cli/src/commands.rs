use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fracim::chain::{unitary_idft, Method, Pipeline};
use fracim::io::{cache_dir, cached_basis, cached_templates};
use fracim::metrics::{ecdf, frame_metrics, ground_truth_objects, median, FrameMetrics};
use fracim::provenance::hash_config;
use fracim::stft::Stft;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::store::{self, FrameEntry, Manifest, MapSidecar};
use crate::CliError;

/// Metric names in table order.
pub const METRICS: [&str; 6] = ["mse", "sinr_db", "evm", "tpr", "far", "f1"];

/// Header of `eval/metrics.csv`.
pub const METRICS_HEADER: &str = "frame,method,mse,sinr_db,evm,tpr,far,f1,tp,fp,fn";

fn metric_values(m: &FrameMetrics) -> [f64; 6] {
    [m.mse, m.sinr_db, m.evm, m.tpr, m.far, m.f1]
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--workers must be at least 1".into())),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn frame_count(limit: Option<usize>, available: usize) -> usize {
    limit.map_or(available, |k| k.min(available))
}

/// Writes the first `frames` (default: all) frames of the dataset and the
/// manifest. Output depends only on the dataset settings.
pub fn cmd_generate(cfg: &ExperimentConfig, frames: Option<usize>) -> Result<Manifest, CliError> {
    let root = &cfg.out_dir;
    let dataset_hash = cfg.dataset_hash()?;
    let count = frame_count(frames, cfg.dataset.count);
    let entries: Vec<FrameEntry> = (0..count)
        .into_par_iter()
        .map(|i| {
            let cube = cfg.dataset.frame(i)?;
            store::write_frame(root, i, &dataset_hash, &cube)
        })
        .collect::<Result<_, CliError>>()?;
    let manifest = Manifest { dataset_hash, count, frames: entries };
    store::write_manifest(root, &manifest)?;
    log::info!("wrote {count} frames to {}", root.display());
    Ok(manifest)
}

fn dataset_entries(cfg: &ExperimentConfig, frames: Option<usize>) -> Result<(Manifest, usize), CliError> {
    let manifest = store::read_manifest(&cfg.out_dir)?;
    if manifest.dataset_hash != cfg.dataset_hash()? {
        return Err(CliError::Data(format!(
            "dataset in {} was generated from different settings; run `generate` again",
            cfg.out_dir.display()
        )));
    }
    let k = frame_count(frames, manifest.frames.len());
    Ok((manifest, k))
}

/// Outcome of one frame of `cmd_run`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub method: Method,
    pub frame: usize,
    pub detections: usize,
    /// The map already existed for this chain configuration.
    pub resumed: bool,
}

/// Processes the dataset with each method, skipping frames whose map was
/// already produced by the same chain configuration.
pub fn cmd_run(cfg: &ExperimentConfig, methods: &[Method], frames: Option<usize>) -> Result<Vec<RunReport>, CliError> {
    let root = &cfg.out_dir;
    let (manifest, k) = dataset_entries(cfg, frames)?;
    let entries = &manifest.frames[..k];
    let base_len = cfg.base_len();
    let experiment_hash = cfg.hash()?;
    let chain_hash = hash_config(&cfg.chain)?;
    let engine = if methods.iter().any(|m| m.needs_mitigator()) {
        let n = cfg.chain.frontend.output_len(base_len)?;
        let dir = cache_dir();
        let basis = cached_basis(&dir, n)?;
        let m = &cfg.chain.mitigation;
        let templates = cached_templates(&dir, &basis, m.m_angles, m.support_threshold_db)?;
        Some((basis, templates))
    } else {
        None
    };
    let mut reports = Vec::new();
    for &method in methods {
        let pipe = match (&engine, method.needs_mitigator()) {
            (Some((b, t)), true) => Pipeline::new(&cfg.chain, base_len, b, t)?,
            _ => Pipeline::baseline(&cfg.chain, base_len)?,
        };
        let done: Vec<RunReport> = entries
            .par_iter()
            .map(|e| {
                let (rcub, prov) = store::map_paths(root, method, e.index);
                if let Some(sc) = store::read_sidecar(&prov) {
                    if sc.provenance.config_hash == chain_hash && sc.dataset_hash == manifest.dataset_hash && rcub.exists() {
                        return Ok(RunReport { method, frame: e.index, detections: sc.provenance.detections, resumed: true });
                    }
                }
                let (cube, real) = store::load_frame(root, e, &manifest.dataset_hash)?;
                let (map, stats) = pipe.process_real(&cube, &real, method)?;
                log::info!(
                    "{method} frame {}: {} detections, {} grid builds, {} updating iterations",
                    e.index,
                    stats.detections,
                    stats.grid_builds,
                    stats.updating_iterations
                );
                let sidecar = MapSidecar {
                    frame: e.index,
                    method: method.as_str().into(),
                    dataset_hash: manifest.dataset_hash.clone(),
                    experiment_hash: experiment_hash.clone(),
                    provenance: map.provenance.clone(),
                };
                store::write_map(root, e.index, method, &map, &sidecar)?;
                Ok(RunReport { method, frame: e.index, detections: stats.detections, resumed: false })
            })
            .collect::<Result<_, CliError>>()?;
        let resumed = done.iter().filter(|r| r.resumed).count();
        log::info!("{method}: {} frames processed, {resumed} already present", done.len() - resumed);
        reports.extend(done);
    }
    Ok(reports)
}

/// Medians of every metric for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMedians {
    pub method: String,
    pub frames: usize,
    pub mse: f64,
    pub sinr_db: f64,
    pub evm: f64,
    pub tpr: f64,
    pub far: f64,
    pub f1: f64,
}

impl MethodMedians {
    pub fn get(&self, metric: &str) -> Option<f64> {
        let v = [self.mse, self.sinr_db, self.evm, self.tpr, self.far, self.f1];
        METRICS.iter().position(|m| *m == metric).map(|i| v[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub experiment_hash: String,
    pub dataset_hash: String,
    pub methods: Vec<MethodMedians>,
}

impl EvalSummary {
    pub fn method(&self, method: Method) -> Option<&MethodMedians> {
        self.methods.iter().find(|m| m.method == method.as_str())
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    store::write_bytes(path, text.as_bytes()).map(|_| ())
}

/// Scores every method that has maps against the interference-free
/// reference of each frame, and writes the table, ECDFs and medians.
pub fn cmd_eval(cfg: &ExperimentConfig, frames: Option<usize>) -> Result<EvalSummary, CliError> {
    let root = &cfg.out_dir;
    let (manifest, k) = dataset_entries(cfg, frames)?;
    let methods: Vec<Method> = Method::ALL.into_iter().filter(|m| store::map_dir(root, *m).is_dir()).collect();
    if methods.is_empty() {
        return Err(CliError::Data(format!("no maps under {}; run `run` first", root.join("maps").display())));
    }
    let pipe = Pipeline::baseline(&cfg.chain, cfg.base_len())?;
    let per_frame: Vec<Vec<FrameMetrics>> = manifest.frames[..k]
        .par_iter()
        .map(|e| {
            let (cube, _) = store::load_frame(root, e, &manifest.dataset_hash)?;
            let reference = pipe.reference_map(&cube)?;
            let gt = ground_truth_objects(&cube.config);
            methods
                .iter()
                .map(|&m| Ok(frame_metrics(&store::load_map(root, m, e.index)?, &reference, &gt, &cfg.metrics)?))
                .collect::<Result<Vec<_>, CliError>>()
        })
        .collect::<Result<_, CliError>>()?;

    let eval_dir = root.join("eval");
    let mut table = format!("{METRICS_HEADER}\n");
    for (j, m) in methods.iter().enumerate() {
        for (e, row) in manifest.frames[..k].iter().zip(&per_frame) {
            let r = &row[j];
            let v = metric_values(r);
            let _ = writeln!(
                table,
                "{},{m},{},{},{},{},{},{},{},{},{}",
                e.index, v[0], v[1], v[2], v[3], v[4], v[5], r.tp, r.fp, r.fn_
            );
        }
    }
    write_text(&eval_dir.join("metrics.csv"), &table)?;

    let mut summary = EvalSummary {
        experiment_hash: cfg.hash()?,
        dataset_hash: manifest.dataset_hash.clone(),
        methods: Vec::new(),
    };
    for (j, m) in methods.iter().enumerate() {
        let mut medians = [0.0; 6];
        for (i, name) in METRICS.iter().enumerate() {
            let values: Vec<f64> = per_frame.iter().map(|row| metric_values(&row[j])[i]).collect();
            let mut text = String::from("value,fraction\n");
            for (v, f) in ecdf(&values)? {
                let _ = writeln!(text, "{v},{f}");
            }
            write_text(&eval_dir.join(format!("ecdf_{name}_{m}.csv")), &text)?;
            medians[i] = median(&values)?;
        }
        summary.methods.push(MethodMedians {
            method: m.as_str().into(),
            frames: k,
            mse: medians[0],
            sinr_db: medians[1],
            evm: medians[2],
            tpr: medians[3],
            far: medians[4],
            f1: medians[5],
        });
    }
    write_text(
        &eval_dir.join("summary.toml"),
        &toml::to_string(&summary).map_err(|e| CliError::Data(e.to_string()))?,
    )?;
    Ok(summary)
}

/// For each frame, the first ramp hit by interference (else ramp 0) as
/// spectrograms before and after mitigation plus its multiangle grid.
pub fn cmd_stft_dump(cfg: &ExperimentConfig, frames: Option<usize>) -> Result<Vec<PathBuf>, CliError> {
    let root = &cfg.out_dir;
    let (manifest, _) = dataset_entries(cfg, None)?;
    let k = frame_count(Some(frames.unwrap_or(1)), manifest.frames.len());
    let base_len = cfg.base_len();
    let n = cfg.chain.frontend.output_len(base_len)?;
    let dir = cache_dir();
    let basis = cached_basis(&dir, n)?;
    let m = &cfg.chain.mitigation;
    let templates = cached_templates(&dir, &basis, m.m_angles, m.support_threshold_db)?;
    let pipe = Pipeline::new(&cfg.chain, base_len, &basis, &templates)?;
    let mitigator = pipe.mitigator()?;
    let s = &cfg.stft;
    let mut written = Vec::new();
    for e in &manifest.frames[..k] {
        let (cube, real) = store::load_frame(root, e, &manifest.dataset_hash)?;
        let c = &cube.config;
        let ramp = (0..c.n_ramps)
            .find(|&r| c.interferers.iter().any(|p| p.present[r]))
            .unwrap_or(0);
        let prepared = pipe.prepared(&real[ramp * c.n_fast..(ramp + 1) * c.n_fast])?;
        let stem = format!("{}_ramp_{ramp:03}", store::frame_stem(e.index));
        let out_dir = root.join("stft");

        let mut csv = Vec::new();
        Stft::compute(&prepared, s.win_len, s.hop, s.nfft)?.write_csv(&mut csv)?;
        let path = out_dir.join(format!("{stem}_stft.csv"));
        store::write_bytes(&path, &csv)?;
        written.push(path);

        let mitigated = unitary_idft(&mitigator.run(&prepared)?.spectrum);
        let mut csv = Vec::new();
        Stft::compute(&mitigated, s.win_len, s.hop, s.nfft)?.write_csv(&mut csv)?;
        let path = out_dir.join(format!("{stem}_stft_mitigated.csv"));
        store::write_bytes(&path, &csv)?;
        written.push(path);

        let grid = mitigator.grid_of(&prepared)?;
        let mut text = String::from("row,angle_deg,column,magnitude_db\n");
        for r in 0..grid.m_angles() {
            let angle = grid.angle_of_row(r).to_degrees();
            for (col, z) in grid.row(r).iter().enumerate() {
                let _ = writeln!(text, "{r},{angle},{col},{:.3}", 20.0 * z.norm().max(1e-300).log10());
            }
        }
        let path = out_dir.join(format!("{stem}_emdfrft.csv"));
        write_text(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}
