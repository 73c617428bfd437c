//! Run configuration: one TOML file with a section per concern.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use sulp_core::dataset::DesignSpec;
use sulp_core::harness::McConfig;
use sulp_core::priors::{default_hyperparameters, HyperParams};
use sulp_core::sampler::SamplerConfig;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; `--seed` takes precedence.
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputConfig,
    pub data: Option<DataConfig>,
    pub spec: Option<DesignSpec>,
    /// Partial overrides of the default hyperparameters.
    pub priors: Option<toml::Table>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    pub simulate: Option<SimulateConfig>,
    pub montecarlo: Option<McConfig>,
    pub reweight: Option<ReweightConfig>,
    pub export: Option<ExportConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("sulp-out") }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default = "default_time_column")]
    pub time_column: String,
    /// Standardize every column before building the design.
    #[serde(default = "yes")]
    pub standardize: bool,
}

fn default_time_column() -> String {
    "date".into()
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Built-in calibration name or path.
    pub calibration: String,
    pub alpha: f64,
    pub t: usize,
    pub burn_in: usize,
    pub max_horizon: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            calibration: "default".into(),
            alpha: 2.0,
            t: 250,
            burn_in: sulp_core::dgp::DEFAULT_BURN_IN,
            max_horizon: 16,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReweightConfig {
    /// Manifest (`.json`) of a stored chain.
    pub chain: Option<PathBuf>,
    pub c: Vec<f64>,
    pub level: f64,
    /// Draws to resample per learning rate; 0 writes weighted summaries only.
    pub resample: usize,
    pub ess_warn_fraction: f64,
}

impl Default for ReweightConfig {
    fn default() -> Self {
        Self {
            chain: None,
            c: sulp_core::power_posterior::canonical_c_grid(),
            level: 0.9,
            resample: 0,
            ess_warn_fraction: sulp_core::power_posterior::DEFAULT_ESS_WARN_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportConfig {
    pub chain: PathBuf,
}

/// Parsed configuration plus what is needed to reproduce it.
pub struct Loaded {
    pub config: RunConfig,
    /// SHA-256 of the file text.
    pub hash: String,
    pub base_dir: PathBuf,
}

impl Loaded {
    /// Relative paths in the file are taken relative to the file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config: RunConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, hash, base_dir })
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Defaults for `h` horizons with the `[priors]` overrides applied.
pub fn hyperparameters(overrides: Option<&toml::Table>, h: usize) -> Result<HyperParams, CliError> {
    let defaults = default_hyperparameters(h);
    let Some(table) = overrides else {
        return Ok(defaults);
    };
    let mut value = serde_json::to_value(defaults).map_err(|e| CliError::Config(e.to_string()))?;
    let patch = serde_json::to_value(table).map_err(|e| CliError::Config(e.to_string()))?;
    merge(&mut value, patch);
    let hyper: HyperParams = serde_json::from_value(value).map_err(|e| CliError::Config(format!("[priors]: {e}")))?;
    hyper.validate(h).map_err(|e| CliError::Config(format!("[priors]: {e}")))?;
    Ok(hyper)
}

