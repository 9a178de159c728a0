//! Run manifest: what a solve produced and where.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub problem: String,
    /// "linear" | "nonlinear"
    pub solver: String,
    pub beta: f64,
    pub horizon: f64,
    /// config copy, relative to the manifest directory
    pub config_file: String,
    /// sha256 of the config bytes
    pub config_hash: String,
    /// "ok" | "no-convergence"
    pub status: String,
    pub outputs: Vec<OutputEntry>,
    pub validation_report: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub picard_report: Option<String>,
    pub timing_ms: BTreeMap<String, u128>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OutputEntry {
    pub t: f64,
    pub field: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")
            .with_context(|| format!("cannot write manifest {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        Ok(serde_json::from_str(&text).context("manifest parse error")?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
