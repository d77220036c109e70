//! `run` and `verify`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::{self, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::experiments::{self, Check};
use crate::formats::json_bytes;
use crate::manifest::{self, FileEntry, RunManifest, MANIFEST_FILE, SUMMARY_FILE};

/// Overrides the directory that relative `output_dir` values resolve against.
pub const OUTPUT_ROOT_ENV: &str = "FENC_OUTPUT_ROOT";

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from)
}

pub fn resolve_output(config: &ExperimentConfig, root: &Path) -> PathBuf {
    let p = Path::new(&config.output_dir);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    config::parse(&text)
}

/// Runs an experiment into `root`/`output_dir`. Files are written to a
/// sibling temporary directory that replaces the target only on success.
pub fn run(config: &ExperimentConfig, root: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let dir = resolve_output(config, root);
    let name = dir
        .file_name()
        .ok_or_else(|| CliError::Config(format!("`output_dir`: {} has no final component", dir.display())))?
        .to_string_lossy()
        .into_owned();
    let parent = dir.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
    let tmp = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    }
    fs::create_dir(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    let result = produce(config, &tmp).and_then(|manifest| {
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        }
        fs::rename(&tmp, &dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(manifest)
    });
    match result {
        Ok(manifest) => Ok(RunOutcome { dir, manifest }),
        Err(e) => {
            let _ = fs::remove_dir_all(&tmp);
            Err(e)
        }
    }
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<FileEntry> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(manifest::entry(name, bytes))
}

fn produce(config: &ExperimentConfig, dir: &Path) -> Result<RunManifest> {
    let started = now();
    let outputs = experiments::run(config)?;
    let checks = experiments::evaluate(config.kind, &outputs.summary)?;
    let mut files = Vec::with_capacity(outputs.files.len() + 1);
    for a in &outputs.files {
        files.push(write(dir, &a.name, &a.bytes)?);
    }
    files.push(write(dir, SUMMARY_FILE, &json_bytes(&outputs.summary))?);
    let manifest = RunManifest::new(config, started, now(), files, checks);
    write(dir, MANIFEST_FILE, &json_bytes(&manifest))?;
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub dir: PathBuf,
    pub passed: bool,
    pub manifest_found: bool,
    pub config_digest_ok: bool,
    pub missing: Vec<String>,
    pub corrupted: Vec<String>,
    pub checks: Vec<Check>,
}

/// Re-checksums a run directory and re-evaluates its acceptance checks.
pub fn verify(dir: &Path) -> Result<VerifyReport> {
    if !dir.is_dir() {
        return Err(CliError::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory")));
    }
    let mut report = VerifyReport {
        dir: dir.to_path_buf(),
        passed: false,
        manifest_found: false,
        config_digest_ok: false,
        missing: Vec::new(),
        corrupted: Vec::new(),
        checks: Vec::new(),
    };
    let path = dir.join(MANIFEST_FILE);
    let Ok(bytes) = fs::read(&path) else {
        report.missing.push(MANIFEST_FILE.to_string());
        return Ok(report);
    };
    report.manifest_found = true;
    let manifest: RunManifest = match serde_json::from_slice(&bytes) {
        Ok(m) => m,
        Err(_) => {
            report.corrupted.push(MANIFEST_FILE.to_string());
            return Ok(report);
        }
    };
    report.config_digest_ok = manifest::config_digest(&manifest.config) == manifest.config_digest;
    for f in &manifest.files {
        match fs::read(dir.join(&f.path)) {
            Err(_) => report.missing.push(f.path.clone()),
            Ok(b) if manifest::sha256_hex(&b) != f.sha256 || b.len() as u64 != f.bytes => {
                report.corrupted.push(f.path.clone())
            }
            Ok(_) => {}
        }
    }
    let summary_ok = manifest.files.iter().any(|f| f.path == SUMMARY_FILE)
        && !report.missing.iter().chain(&report.corrupted).any(|p| p == SUMMARY_FILE);
    if summary_ok {
        let bytes = fs::read(dir.join(SUMMARY_FILE)).map_err(|e| CliError::io(dir.join(SUMMARY_FILE), e))?;
        let summary: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| CliError::format(SUMMARY_FILE, e.to_string()))?;
        report.checks = experiments::evaluate(manifest.config.kind, &summary)?;
    }
    report.passed = summary_ok
        && report.config_digest_ok
        && report.missing.is_empty()
        && report.corrupted.is_empty()
        && report.checks.iter().all(|c| c.passed);
    Ok(report)
}
