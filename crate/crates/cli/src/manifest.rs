//! Run manifests: enough provenance to reproduce a run byte for byte with
//! a deterministic backend. Written next to the run's outputs; never
//! contains credential values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub command_line: Vec<String>,
    pub config_hash: String,
    pub prompt_version: String,
    pub vocab_version: String,
    pub seed: u64,
    pub input_digests: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
}

pub struct ManifestBuilder {
    subcommand: String,
    config_hash: String,
    seed: u64,
    inputs: BTreeMap<String, String>,
    started_at: chrono::DateTime<chrono::Utc>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, config_path: Option<&Path>, seed: u64) -> Self {
        let config_hash = config_path
            .and_then(|p| std::fs::read(p).ok())
            .map(|bytes| sha256_hex(&bytes))
            .unwrap_or_else(|| "none".to_string());
        Self {
            subcommand: subcommand.to_string(),
            config_hash,
            seed,
            inputs: BTreeMap::new(),
            started_at: chrono::Utc::now(),
        }
    }

    /// Record an input file's digest; missing files are recorded as such so
    /// the manifest still explains what the run saw.
    pub fn add_input(&mut self, path: &Path) {
        let digest = std::fs::read(path)
            .map(|bytes| sha256_hex(&bytes))
            .unwrap_or_else(|_| "unreadable".to_string());
        self.inputs.insert(path.display().to_string(), digest);
    }

    pub fn write(self, output_dir: &Path) -> std::io::Result<PathBuf> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: self.subcommand.clone(),
            command_line: std::env::args().collect(),
            config_hash: self.config_hash,
            prompt_version: radlt::prompts::PROMPT_VERSION.to_string(),
            vocab_version: radlt::schema::VOCAB_VERSION.to_string(),
            seed: self.seed,
            input_digests: self.inputs,
            started_at: self.started_at.to_rfc3339(),
            finished_at: chrono::Utc::now().to_rfc3339(),
        };
        std::fs::create_dir_all(output_dir)?;
        let path = output_dir.join(format!("manifest-{}.json", self.subcommand));
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(&manifest).unwrap())?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }
}
