//! One JSON document per command. Unknown fields are rejected and every
//! record is validated before any computation starts.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fbvar::dgp::DgpConfig;
use fbvar::forecast::{DensityEstimate, EvaluationConfig};
use fbvar::gibbs::SamplerConfig;
use fbvar::structural::SignSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Raw CSV plus its transform-code sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub csv: PathBuf,
    pub transforms: PathBuf,
    pub p: usize,
    #[serde(default = "yes")]
    pub standardize: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub dgp: DgpConfig,
    pub out_dir: PathBuf,
}

/// A named preset or an explicit restriction table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignSpecInput {
    Preset(String),
    Table(SignSpec),
}

impl SignSpecInput {
    pub fn resolve(&self) -> Result<SignSpec> {
        match self {
            SignSpecInput::Table(s) => Ok(s.clone()),
            SignSpecInput::Preset(name) if name == "macro_financial" => Ok(SignSpec::macro_financial()),
            SignSpecInput::Preset(name) => {
                anyhow::bail!("invalid configuration `sign_spec`: unknown preset `{name}` (known: macro_financial)")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub data: DataSpec,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub sign_spec: Option<SignSpecInput>,
    /// Sweeps between checkpoints; 0 writes one only when asked to resume.
    #[serde(default)]
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    pub estimate_dir: PathBuf,
    /// Re-read data whose fingerprint must match the chain's.
    #[serde(default)]
    pub data: Option<DataSpec>,
    /// Row of the sample the first forecast refers to; the end of the
    /// sample when absent.
    #[serde(default)]
    pub origin: Option<usize>,
    pub horizon: usize,
    #[serde(default = "default_paths")]
    pub n_per_draw: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub density: DensityEstimate,
    pub out_dir: PathBuf,
}

fn default_paths() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub data: DataSpec,
    pub evaluation: EvaluationConfig,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrfConfig {
    pub estimate_dir: PathBuf,
    #[serde(default)]
    pub data: Option<DataSpec>,
    /// Static-factor indices to shock; all when absent.
    #[serde(default)]
    pub shocks: Option<Vec<usize>>,
    #[serde(default = "one")]
    pub size_sd: f64,
    pub horizon: usize,
    #[serde(default = "default_histories")]
    pub n_histories: usize,
    #[serde(default = "default_irf_paths")]
    pub n_paths: usize,
    #[serde(default = "yes")]
    pub antithetic: bool,
    #[serde(default)]
    pub history_rows: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
    /// Also write every draw's positive and negative response.
    #[serde(default)]
    pub write_draws: bool,
    pub out_dir: PathBuf,
}

fn one() -> f64 {
    1.0
}

fn default_histories() -> usize {
    50
}

fn default_irf_paths() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdpConfig {
    pub estimate_dir: PathBuf,
    #[serde(default)]
    pub data: Option<DataSpec>,
    /// Series whose lags are moved; all series when absent.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    /// Quantile levels; 1% to 99% when absent.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    pub out_dir: PathBuf,
}

/// Parses `path` into `T`, naming the file in every error.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

/// Relative paths in a config are taken from the config file's directory.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
