//! On-disk layout of an experiment directory.
//!
//! ```text
//! manifest.toml
//! dataset/frame_NNNNN.rcub                 received real samples
//! dataset/frame_NNNNN.<component>.rcub     objects, interference, noise (complex)
//! maps/<method>/frame_NNNNN.rcub           complex range-Doppler map
//! maps/<method>/frame_NNNNN.prov.toml      provenance sidecar
//! eval/metrics.csv, eval/ecdf_<metric>_<method>.csv, eval/summary.toml
//! stft/frame_NNNNN_stft.csv, stft/frame_NNNNN_emdfrft.csv
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use fracim::chain::{Method, Provenance, RdMap};
use fracim::io::{write_atomically, CubeData, RcubFile};
use fracim::provenance::sha256_hex;
use fracim::sigmodel::{Cube, FrameConfig, RadarCube};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const COMPONENTS: [&str; 3] = ["objects", "interference", "noise"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the experiment directory.
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub seed: u64,
    pub received: FileEntry,
    pub objects: FileEntry,
    pub interference: FileEntry,
    pub noise: FileEntry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_hash: String,
    pub count: usize,
    pub frames: Vec<FrameEntry>,
}

/// Metadata block of a received-samples file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub frame: usize,
    pub dataset_hash: String,
    pub objects: String,
    pub interference: String,
    pub noise: String,
    pub config: FrameConfig,
}

/// Metadata block of a component file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentMeta {
    pub frame: usize,
    pub dataset_hash: String,
    pub component: String,
}

/// Sidecar written next to every map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub frame: usize,
    pub method: String,
    pub dataset_hash: String,
    pub experiment_hash: String,
    pub provenance: Provenance,
}

pub fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

pub fn frame_stem(index: usize) -> String {
    format!("frame_{index:05}")
}

pub fn manifest_path(root: &Path) -> PathBuf {
    root.join("manifest.toml")
}

pub fn map_dir(root: &Path, method: Method) -> PathBuf {
    root.join("maps").join(method.as_str())
}

pub fn map_paths(root: &Path, method: Method, index: usize) -> (PathBuf, PathBuf) {
    let dir = map_dir(root, method);
    let stem = frame_stem(index);
    (dir.join(format!("{stem}.rcub")), dir.join(format!("{stem}.prov.toml")))
}

fn to_toml_text<T: Serialize>(value: &T) -> Result<String, CliError> {
    toml::to_string(value).map_err(data_err)
}

/// Writes `bytes` atomically and returns their digest.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<String, CliError> {
    write_atomically(path, |w| Ok(w.write_all(bytes)?))?;
    Ok(sha256_hex(bytes))
}

fn encode(file: &RcubFile) -> Result<Vec<u8>, CliError> {
    let mut bytes = Vec::new();
    file.write_to(&mut bytes)?;
    Ok(bytes)
}

/// Writes the received samples and the three components of one frame.
pub fn write_frame(root: &Path, index: usize, dataset_hash: &str, cube: &RadarCube) -> Result<FrameEntry, CliError> {
    let c = &cube.config;
    let stem = frame_stem(index);
    let rel = |suffix: &str| format!("dataset/{stem}{suffix}.rcub");
    let mut entries = Vec::new();
    for (name, part) in COMPONENTS.iter().zip([&cube.objects, &cube.interference, &cube.noise]) {
        let meta = ComponentMeta { frame: index, dataset_hash: dataset_hash.into(), component: (*name).into() };
        let file = RcubFile {
            n_fast: c.n_fast,
            n_ramps: c.n_ramps,
            data: CubeData::Complex(part.data.clone()),
            metadata: to_toml_text(&meta)?,
        };
        let path = rel(&format!(".{name}"));
        let sha256 = write_bytes(&root.join(&path), &encode(&file)?)?;
        entries.push(FileEntry { file: path, sha256 });
    }
    let meta = FrameMeta {
        frame: index,
        dataset_hash: dataset_hash.into(),
        objects: entries[0].file.clone(),
        interference: entries[1].file.clone(),
        noise: entries[2].file.clone(),
        config: c.clone(),
    };
    let file = RcubFile {
        n_fast: c.n_fast,
        n_ramps: c.n_ramps,
        data: CubeData::Real(cube.received_real()),
        metadata: to_toml_text(&meta)?,
    };
    let path = rel("");
    let sha256 = write_bytes(&root.join(&path), &encode(&file)?)?;
    let mut it = entries.into_iter();
    Ok(FrameEntry {
        index,
        seed: c.rng_seed,
        received: FileEntry { file: path, sha256 },
        objects: it.next().unwrap(),
        interference: it.next().unwrap(),
        noise: it.next().unwrap(),
    })
}

pub fn write_manifest(root: &Path, manifest: &Manifest) -> Result<String, CliError> {
    write_bytes(&manifest_path(root), to_toml_text(manifest)?.as_bytes())
}

pub fn read_manifest(root: &Path) -> Result<Manifest, CliError> {
    let path = manifest_path(root);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("no dataset at {}: {e}; run `generate` first", root.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_rcub(root: &Path, rel: &str) -> Result<RcubFile, CliError> {
    let path = root.join(rel);
    RcubFile::load(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn complex_component(root: &Path, rel: &str, n_fast: usize, n_ramps: usize) -> Result<Cube, CliError> {
    let f = load_rcub(root, rel)?;
    match f.data {
        CubeData::Complex(data) if f.n_fast == n_fast && f.n_ramps == n_ramps => Ok(Cube { n_fast, n_ramps, data }),
        _ => Err(CliError::Data(format!("{rel}: expected a complex {n_fast} x {n_ramps} cube"))),
    }
}

/// Reads one frame back: its parameters, components and the received real
/// samples exactly as stored.
pub fn load_frame(root: &Path, entry: &FrameEntry, dataset_hash: &str) -> Result<(RadarCube, Vec<f64>), CliError> {
    let f = load_rcub(root, &entry.received.file)?;
    let meta: FrameMeta =
        toml::from_str(&f.metadata).map_err(|e| CliError::Data(format!("{}: {e}", entry.received.file)))?;
    if meta.dataset_hash != dataset_hash {
        return Err(CliError::Data(format!(
            "{} was generated from different dataset settings; run `generate` again",
            entry.received.file
        )));
    }
    let config = meta.config;
    let (nf, nr) = (config.n_fast, config.n_ramps);
    let real = match f.data {
        CubeData::Real(v) if f.n_fast == nf && f.n_ramps == nr => v,
        _ => return Err(CliError::Data(format!("{}: expected a real {nf} x {nr} cube", entry.received.file))),
    };
    let objects = complex_component(root, &meta.objects, nf, nr)?;
    let interference = complex_component(root, &meta.interference, nf, nr)?;
    let noise = complex_component(root, &meta.noise, nf, nr)?;
    let mut data = objects.clone();
    for ((d, i), n) in data.data.iter_mut().zip(&interference.data).zip(&noise.data) {
        *d = *d + *i + *n;
    }
    Ok((RadarCube { config, data, objects, interference, noise }, real))
}

pub fn write_map(root: &Path, index: usize, method: Method, map: &RdMap, sidecar: &MapSidecar) -> Result<(), CliError> {
    let (rcub, prov) = map_paths(root, method, index);
    let text = to_toml_text(sidecar)?;
    let file = RcubFile {
        n_fast: map.n_range,
        n_ramps: map.n_doppler,
        data: CubeData::Complex(map.data.clone()),
        metadata: text.clone(),
    };
    write_bytes(&rcub, &encode(&file)?)?;
    // sidecar last: its presence marks a finished frame
    write_bytes(&prov, text.as_bytes())?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Option<MapSidecar> {
    toml::from_str(&std::fs::read_to_string(path).ok()?).ok()
}

pub fn load_map(root: &Path, method: Method, index: usize) -> Result<RdMap, CliError> {
    let (rcub, prov) = map_paths(root, method, index);
    let sidecar = read_sidecar(&prov)
        .ok_or_else(|| CliError::Data(format!("missing or unreadable {}; run `run --method {method}`", prov.display())))?;
    let f = RcubFile::load(&rcub).map_err(|e| CliError::Data(format!("{}: {e}", rcub.display())))?;
    match f.data {
        CubeData::Complex(data) => Ok(RdMap { n_range: f.n_fast, n_doppler: f.n_ramps, data, provenance: sidecar.provenance }),
        CubeData::Real(_) => Err(CliError::Data(format!("{}: map must be complex", rcub.display()))),
    }
}
