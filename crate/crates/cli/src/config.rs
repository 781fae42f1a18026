//! Experiment configuration: a TOML file whose tables override the built-in
//! defaults key by key.

use std::path::{Path, PathBuf};

use fracim::chain::ChainConfig;
use fracim::detector::DetectorConfig;
use fracim::frontend::FrontendConfig;
use fracim::metrics::CfarConfig;
use fracim::provenance::hash_config;
use fracim::sigmodel::DatasetSpec;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

/// Spectrogram geometry for `stft-dump`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub win_len: usize,
    pub hop: usize,
    pub nfft: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { win_len: 64, hop: 8, nfft: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    /// Copied into `dataset.master_seed`.
    pub master_seed: u64,
    pub dataset: DatasetSpec,
    pub chain: ChainConfig,
    pub metrics: CfarConfig,
    pub stft: StftConfig,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn table_of<T: Serialize>(value: &T) -> Result<Table, CliError> {
    Table::try_from(value).map_err(config_err)
}

/// Overwrites entries of `base` with those of `over`, descending into
/// tables. Keys absent from `base` are rejected.
fn merge(base: &mut Table, over: &Table, path: &str) -> Result<(), CliError> {
    for (k, v) in over {
        let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        match (base.get_mut(k), v) {
            (None, _) => return Err(CliError::Config(format!("unknown key '{key}'"))),
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o, &key)?,
            (Some(Value::Table(_)), _) => return Err(CliError::Config(format!("'{key}' must be a table"))),
            (Some(slot), _) => *slot = v.clone(),
        }
    }
    Ok(())
}

fn sub_table<'a>(t: &'a Table, key: &str) -> Result<Option<&'a Table>, CliError> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Table(s)) => Ok(Some(s)),
        Some(_) => Err(CliError::Config(format!("'{key}' must be a table"))),
    }
}

fn has_path(t: &Table, path: &[&str]) -> bool {
    let mut cur = t;
    for (i, k) in path.iter().enumerate() {
        match cur.get(*k) {
            Some(Value::Table(s)) if i + 1 < path.len() => cur = s,
            Some(_) if i + 1 == path.len() => return true,
            _ => return false,
        }
    }
    false
}

fn merged<T: Serialize + for<'de> Deserialize<'de>>(default: &T, over: Option<&Table>, path: &str) -> Result<T, CliError> {
    let mut base = table_of(default)?;
    if let Some(o) = over {
        merge(&mut base, o, path)?;
    }
    Value::Table(base).try_into().map_err(|e| config_err(format!("{path}: {e}")))
}

impl ExperimentConfig {
    /// Built-in defaults.
    pub fn defaults() -> Result<Self, CliError> {
        Self::from_table(&Table::new())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let t: Table = text.parse().map_err(config_err)?;
        Self::from_table(&t)
    }

    /// Reads `path`, or returns the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Self::defaults(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml_str(&text)
            }
        }
    }

    /// Merges a parsed file over the defaults. Defaults that depend on other
    /// settings follow them unless set explicitly: chain lengths follow
    /// `dataset.n_fast`, the detector window follows the guard size and the
    /// padded length, and the interference angle scale follows the frontend.
    fn from_table(t: &Table) -> Result<Self, CliError> {
        for k in t.keys() {
            if !["out_dir", "master_seed", "dataset", "chain", "metrics", "stft"].contains(&k.as_str()) {
                return Err(CliError::Config(format!("unknown key '{k}'")));
            }
        }
        let mut dataset: DatasetSpec = merged(&DatasetSpec::default(), sub_table(t, "dataset")?, "dataset")?;
        let base_len = dataset.n_fast / 2;
        let chain_over = sub_table(t, "chain")?;
        let frontend: FrontendConfig = merged(
            &FrontendConfig::default(),
            chain_over.map(|c| sub_table(c, "frontend")).transpose()?.flatten(),
            "chain.frontend",
        )?;
        frontend.validate(base_len)?;
        let n = frontend.output_len(base_len)?;
        let mut chain_default = ChainConfig::default_for(base_len)?;
        chain_default.frontend = frontend;
        chain_default.mitigation = fracim::mitigation::MitigationConfig::default_for(n);
        let mut chain: ChainConfig = merged(&chain_default, chain_over, "chain")?;
        let user = chain_over.cloned().unwrap_or_default();
        if !has_path(&user, &["mitigation", "detector", "phi"]) {
            let d = chain.mitigation.detector;
            chain.mitigation.detector = DetectorConfig::full_window(n, d.guard, d.beta_db);
        }
        let dataset_over = sub_table(t, "dataset")?.cloned().unwrap_or_default();
        if !dataset_over.contains_key("angle_rate_scale") {
            dataset.angle_rate_scale = frontend.angle_rate_scale(base_len)?;
        }
        let master_seed = match t.get("master_seed") {
            None => dataset.master_seed,
            Some(Value::Integer(s)) if *s >= 0 => *s as u64,
            Some(_) => return Err(CliError::Config("master_seed must be a non-negative integer".into())),
        };
        dataset.master_seed = master_seed;
        let out_dir = match t.get("out_dir") {
            None => PathBuf::from("fracim-out"),
            Some(Value::String(s)) => PathBuf::from(s),
            Some(_) => return Err(CliError::Config("out_dir must be a string".into())),
        };
        let cfg = Self {
            out_dir,
            master_seed,
            dataset,
            chain,
            metrics: merged(&CfarConfig::default(), sub_table(t, "metrics")?, "metrics")?,
            stft: merged(&StftConfig::default(), sub_table(t, "stft")?, "stft")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.dataset.validate()?;
        if self.dataset.n_fast % 2 != 0 {
            return Err(CliError::Config("dataset.n_fast must be even".into()));
        }
        let base_len = self.base_len();
        self.chain.frontend.validate(base_len)?;
        self.chain.mitigation.validate(self.chain.frontend.output_len(base_len)?)?;
        if self.chain.ramp_filter_len == 0 || self.chain.envelope.average_len == 0 {
            return Err(CliError::Config("filter lengths must be positive".into()));
        }
        let c = &self.metrics;
        if !(c.pfa > 0.0 && c.pfa < 1.0) || c.training == 0 {
            return Err(CliError::Config("metrics: need 0 < pfa < 1 and training >= 1".into()));
        }
        let s = &self.stft;
        if s.win_len == 0 || s.hop == 0 || s.nfft < s.win_len {
            return Err(CliError::Config("stft: need win_len, hop >= 1 and nfft >= win_len".into()));
        }
        Ok(())
    }

    /// Complex samples per ramp after demodulation.
    pub fn base_len(&self) -> usize {
        self.dataset.n_fast / 2
    }

    /// Canonical TOML of the full configuration.
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(config_err)
    }

    /// Hash of everything except the output location.
    pub fn hash(&self) -> Result<String, CliError> {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        Ok(hash_config(&c)?)
    }

    /// Hash of the dataset parameters alone.
    pub fn dataset_hash(&self) -> Result<String, CliError> {
        Ok(hash_config(&self.dataset)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_reference_settings() {
        let c = ExperimentConfig::defaults().unwrap();
        let m = &c.chain.mitigation;
        assert_eq!(m.m_angles, 256);
        assert!((m.alpha_max.to_degrees() - 80.0).abs() < 1e-12);
        assert_eq!(m.detector.guard, 20);
        assert_eq!(m.detector.beta_db, 20.0);
        assert_eq!(m.detector.phi, 427);
        assert_eq!(c.dataset.count, 250);
        let text = c.to_toml().unwrap();
        assert!(text.contains("alpha_max_deg = 80"));
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap().hash().unwrap(), c.hash().unwrap());
        let moved = ExperimentConfig { out_dir: "elsewhere".into(), ..c.clone() };
        assert_eq!(moved.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let c = ExperimentConfig::from_toml_str(
            "master_seed = 9\n[dataset]\ncount = 3\ninr_db = [30, 35]\n[chain.mitigation.detector]\nguard = 10\n",
        )
        .unwrap();
        assert_eq!(c.dataset.count, 3);
        assert_eq!(c.dataset.master_seed, 9);
        assert_eq!(c.dataset.inr_db, [30.0, 35.0]);
        assert_eq!(c.dataset.n_ramps, 128);
        assert_eq!(c.chain.mitigation.detector.guard, 10);
        assert_eq!(c.chain.mitigation.detector.phi, 448 - 11);
        assert_eq!(c.chain.mitigation.m_angles, 256);
    }

    #[test]
    fn dependent_defaults_follow_geometry() {
        let c = ExperimentConfig::from_toml_str("[dataset]\nn_fast = 256\nobject_bins = [4, 100]\n").unwrap();
        let n = c.chain.frontend.output_len(128).unwrap();
        assert_eq!(n, 160 + 256);
        assert_eq!(c.chain.mitigation.detector.phi, n / 2 - 21);
        assert!((c.dataset.angle_rate_scale - 4.0 * n as f64 / 1.5625).abs() < 1e-9);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(ExperimentConfig::from_toml_str("[dataset]\ncuont = 3\n"), Err(CliError::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml_str("bogus = 1\n"), Err(CliError::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml_str("[chain]\nlowpass = \"sometimes\"\n"), Err(CliError::Config(_))));
        assert!(matches!(
            ExperimentConfig::from_toml_str("[chain.mitigation]\nalpha_max_deg = 95.0\n"),
            Err(CliError::Config(_))
        ));
        assert!(matches!(ExperimentConfig::from_toml_str("[dataset\n"), Err(CliError::Config(_))));
    }
}
