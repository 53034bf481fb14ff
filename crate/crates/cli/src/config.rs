//! Declarative TOML configuration. Credentials never appear in the file;
//! the extraction section names the environment variable that holds them.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FileConfig {
    #[serde(default)]
    pub extraction: ExtractionSection,
    #[serde(default)]
    pub pipeline: Option<PipelineSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionSection {
    pub endpoint: String,
    pub model_name: String,
    pub credential_env_var: String,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub temperature: f64,
    pub request_seed: Option<u64>,
    pub request_timeout_secs: u64,
}

impl Default for ExtractionSection {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model_name: "rule".to_string(),
            credential_env_var: String::new(),
            max_retries: 3,
            initial_backoff_ms: 500,
            temperature: 0.0,
            request_seed: Some(0),
            request_timeout_secs: 60,
        }
    }
}

impl ExtractionSection {
    pub fn to_extraction_config(
        &self,
        cache_dir: Option<PathBuf>,
    ) -> radlt::extraction::ExtractionConfig {
        radlt::extraction::ExtractionConfig {
            endpoint: self.endpoint.clone(),
            model_name: self.model_name.clone(),
            credential_env_var: self.credential_env_var.clone(),
            max_retries: self.max_retries,
            initial_backoff: Duration::from_millis(self.initial_backoff_ms),
            temperature: self.temperature,
            request_seed: self.request_seed,
            cache_dir,
            request_timeout: Duration::from_secs(self.request_timeout_secs),
        }
    }
}

/// Config-driven pipeline: synthesize (or take provided findings), extract,
/// evaluate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSection {
    #[serde(default)]
    pub synth: Option<SynthStage>,
    #[serde(default)]
    pub findings: Option<PathBuf>,
    #[serde(default)]
    pub reference: Option<PathBuf>,
    #[serde(default)]
    pub extract: ExtractStage,
    #[serde(default)]
    pub eval: EvalStage,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthStage {
    pub count: usize,
    pub min_instances: usize,
    pub max_instances: usize,
    pub incorrect_placement_rate: f64,
    pub include_normal_filler: bool,
}

impl Default for SynthStage {
    fn default() -> Self {
        Self {
            count: 100,
            min_instances: 0,
            max_instances: 4,
            incorrect_placement_rate: 0.084,
            include_normal_filler: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractStage {
    pub backend: String,
}

impl Default for ExtractStage {
    fn default() -> Self {
        Self {
            backend: "rule".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalStage {
    pub n_bootstrap: usize,
    pub percent: bool,
}

impl Default for EvalStage {
    fn default() -> Self {
        Self {
            n_bootstrap: 500,
            percent: false,
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
