//! Run manifests: every output is reproducible from its manifest.
//!
//! The deterministic part (command line, resolved configuration, seed,
//! input digests, version) is embedded in JSON outputs; the sidecar
//! `<output>.manifest.json` adds a timestamp. Re-running the recorded
//! argv reproduces the primary output byte for byte (wall-clock columns
//! excepted).

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub input_digests: Vec<InputDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: std::env::args().collect(),
            subcommand: subcommand.to_string(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            input_digests: Vec::new(),
            timestamp: None,
        }
    }

    pub fn digest_input(&mut self, path: &Path) -> Result<()> {
        let bytes =
            fs::read(path).with_context(|| format!("digesting input {}", path.display()))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        self.input_digests.push(InputDigest {
            path: path.display().to_string(),
            sha256: format!("{:x}", hasher.finalize()),
        });
        Ok(())
    }

    /// The embeddable copy: no timestamp, so primary outputs stay
    /// byte-identical across re-runs.
    pub fn deterministic(&self) -> Self {
        let mut m = self.clone();
        m.timestamp = None;
        m
    }

    /// Sidecar copy with the wall-clock stamp.
    pub fn stamped(&self) -> Self {
        let mut m = self.clone();
        m.timestamp = Some(chrono::Utc::now().to_rfc3339());
        m
    }
}

/// Write the sidecar manifest next to an output file.
pub fn write_sidecar(manifest: &RunManifest, output: &Path, force: bool) -> Result<()> {
    let path = sidecar_path(output);
    crate::output::guard_overwrite(&path, force)?;
    let json = serde_json::to_string_pretty(&manifest.stamped())?;
    fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn sidecar_path(output: &Path) -> std::path::PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}
