//! Run configuration: a TOML file of defaults (named by `--config` or the
//! `FAITHSEL_CONFIG` environment variable) with command-line flags as
//! overrides. The fully resolved configuration is echoed into the output
//! directory of every run for provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use faithsel::genharness::GridSpec;

use crate::CliError;

/// File-configurable settings. Every field is optional; command-specific
/// resolution picks what it needs and applies flag overrides.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotations: Option<Vec<PathBuf>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distributions: Option<Vec<PathBuf>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gazetteer: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summaries: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strict: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partial: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accent_fold: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub type_aware_entities: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multiset_entities: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_config: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inventory: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ct_reference: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl RunConfig {
    /// Load the config file named by `--config` or `FAITHSEL_CONFIG`; no file
    /// means all defaults.
    pub fn load(explicit: Option<&Path>) -> Result<RunConfig, CliError> {
        let path = match explicit {
            Some(path) => Some(path.to_path_buf()),
            None => std::env::var_os("FAITHSEL_CONFIG").map(PathBuf::from),
        };
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::input(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::input(format!("config {}: {e}", path.display())))
    }
}

/// Serialize the resolved configuration for the provenance echo.
pub fn render_effective(config: &RunConfig) -> Result<String, CliError> {
    toml::to_string_pretty(config)
        .map_err(|e| CliError::internal(format!("rendering effective config: {e}")))
}
