//! Machine-readable report envelopes with a deterministic config hash.
//! Re-running with identical inputs and flags yields byte-identical JSON.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub seed: u64,
    pub bootstrap: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iou_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fppi_rates: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_policy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope<T> {
    pub schema_version: u32,
    pub tool_version: String,
    pub kind: String,
    pub config: ReportConfig,
    pub data: T,
}

impl<T: Serialize> ReportEnvelope<T> {
    pub fn new(kind: &str, config: ReportConfig, data: T) -> Self {
        ReportEnvelope {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            kind: kind.to_string(),
            config,
            data,
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json)
            .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))
    }
}

/// Hash over every input file's bytes plus the flag string; embedded in
/// reports so each cell is traceable to its configuration.
pub fn config_hash(input_paths: &[&Path], flags: &str) -> anyhow::Result<String> {
    let mut hasher = Sha256::new();
    for path in input_paths {
        let bytes = std::fs::read(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    hasher.update(flags.as_bytes());
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
