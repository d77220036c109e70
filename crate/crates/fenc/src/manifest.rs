//! Run manifests: what was run, by which tool, and what it produced.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::experiments::Check;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub kind: String,
    pub seed: u64,
    /// SHA-256 of the configuration's canonical JSON form.
    pub config_digest: String,
    pub config: ExperimentConfig,
    /// Seconds since the Unix epoch.
    pub started_unix: f64,
    pub finished_unix: f64,
    pub files: Vec<FileEntry>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_digest(config: &ExperimentConfig) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("configs serialize"))
}

pub fn entry(path: &str, bytes: &[u8]) -> FileEntry {
    FileEntry {
        path: path.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len() as u64,
    }
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig, started_unix: f64, finished_unix: f64, files: Vec<FileEntry>, checks: Vec<Check>) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: TOOL_VERSION.to_string(),
            kind: config.kind.name().to_string(),
            seed: config.seed,
            config_digest: config_digest(config),
            config: config.clone(),
            started_unix,
            finished_unix,
            files,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}
