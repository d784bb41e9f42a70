//! Strict JSON run configurations. Relative paths resolve against the
//! directory of the config file.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use specmatch::fmap::DEFAULT_ALPHA;
use specmatch::train::TrainConfig;

use crate::error::{CliError, CliResult};

/// Eigenbasis size used when a config does not name one.
pub const DEFAULT_K: usize = 200;

fn default_k() -> usize {
    DEFAULT_K
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_true() -> bool {
    true
}

fn default_probes() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecomputeConfig {
    #[serde(default)]
    pub meshes: Vec<PathBuf>,
    /// Every mesh listed in these manifests is included.
    #[serde(default)]
    pub manifests: Vec<PathBuf>,
    #[serde(default = "default_k")]
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub manifest: PathBuf,
    pub cache_dir: PathBuf,
    #[serde(default = "default_k")]
    pub k: usize,
    pub train: TrainConfig,
    /// Train once per value with `p_c = p_s = value`, each in `p<value>/`.
    #[serde(default)]
    pub sweep_p: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchConfig {
    pub checkpoint: PathBuf,
    pub cache_dir: PathBuf,
    /// Defaults to the eigenbasis size stored in the checkpoint.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub source: Option<PathBuf>,
    #[serde(default)]
    pub target: Option<PathBuf>,
    /// Match every pair of a manifest instead of one source/target.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub manifest: PathBuf,
    pub predictions: PathBuf,
    #[serde(default = "default_true")]
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig { probes: 5, seed: 0 }
    }
}

/// Reads and strictly parses a config file.
pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Joins `p` onto `base` when relative.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

/// Directory that relative config paths are resolved against.
pub fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn require_file(p: &Path, what: &str) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::config(format!("{what} {} does not exist", p.display())))
    }
}

pub fn require_dir(p: &Path, what: &str) -> CliResult<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(CliError::config(format!("{what} {} is not a directory", p.display())))
    }
}
