//! Pipelines for each experiment kind.
//!
//! Every kind produces data files plus a JSON summary. Acceptance checks
//! are computed from the summary alone so that `verify` can re-run them on
//! a finished run directory.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Kind};
use crate::error::{CliError, Result};
use crate::formats::{json_bytes, Table};
use crate::plot::Plot;

mod bandwidth;
mod lindblad_sweep;
mod multitone;
mod phase;
mod sensitivity;
mod snr;
mod telegraph;

#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<Artifact>,
    pub summary: serde_json::Value,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push(Artifact {
            name: name.into(),
            bytes,
        });
    }

    pub fn csv(&mut self, name: impl Into<String>, table: &Table) {
        self.add(name, table.to_bytes());
    }

    pub fn svg(&mut self, name: impl Into<String>, plot: &Plot) {
        self.add(name, plot.to_svg().into_bytes());
    }

    pub fn json(&mut self, name: impl Into<String>, value: &impl Serialize) {
        self.add(name, json_bytes(value));
    }

    fn set_summary(&mut self, summary: &impl Serialize) {
        self.summary = serde_json::to_value(summary).expect("summaries serialize");
    }
}

/// Outcome of one acceptance assertion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: String,
    pub expected: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, measured: impl Into<String>, expected: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            measured: measured.into(),
            expected: expected.into(),
        }
    }

    /// `|measured - target| <= tolerance`.
    pub fn within(name: impl Into<String>, measured: f64, target: f64, tolerance: f64) -> Self {
        Check::new(
            name,
            (measured - target).abs() <= tolerance,
            format!("{measured:.6}"),
            format!("{target} ± {tolerance}"),
        )
    }

    /// `|measured / target - 1| <= tolerance`.
    pub fn relative(name: impl Into<String>, measured: f64, target: f64, tolerance: f64) -> Self {
        Check::new(
            name,
            (measured / target - 1.0).abs() <= tolerance,
            format!("{measured:.6e}"),
            format!("{target:.6e} ± {:.1}%", 100.0 * tolerance),
        )
    }
}

/// Independent sub-seed for one component of a run.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut bytes = Vec::with_capacity(8 * (path.len() + 1));
    bytes.extend_from_slice(&seed.to_le_bytes());
    for p in path {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    fenc_core::fnv1a64(&bytes)
}

/// Digest recorded in tag-file headers to tie streams to their configuration.
pub fn source_digest(config: &ExperimentConfig) -> u64 {
    fenc_core::fnv1a64(&serde_json::to_vec(config).expect("configs serialize"))
}

pub fn run(config: &ExperimentConfig) -> Result<Outputs> {
    match config.kind {
        Kind::SensitivityTable => sensitivity::run(config),
        Kind::SnrScaling => snr::run(config),
        Kind::BandwidthSweep => bandwidth::run(config),
        Kind::LindbladSweep => lindblad_sweep::run(config),
        Kind::Multitone => multitone::run(config),
        Kind::PhaseCoherent => phase::run(config),
        Kind::Telegraph => telegraph::run(config),
    }
}

fn typed<T: DeserializeOwned>(summary: &serde_json::Value) -> Result<T> {
    T::deserialize(summary).map_err(|e| CliError::format("summary", e.to_string()))
}

pub fn evaluate(kind: Kind, summary: &serde_json::Value) -> Result<Vec<Check>> {
    Ok(match kind {
        Kind::SensitivityTable => sensitivity::evaluate(&typed(summary)?),
        Kind::SnrScaling => snr::evaluate(&typed(summary)?),
        Kind::BandwidthSweep => bandwidth::evaluate(&typed(summary)?),
        Kind::LindbladSweep => lindblad_sweep::evaluate(&typed(summary)?),
        Kind::Multitone => multitone::evaluate(&typed(summary)?),
        Kind::PhaseCoherent => phase::evaluate(&typed(summary)?),
        Kind::Telegraph => telegraph::evaluate(&typed(summary)?),
    })
}

/// `sin(x) / x` with the removable singularity filled.
pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Maximum over consecutive blocks, for plotting long spectra.
pub(crate) fn decimate_max(x: &[f64], y: &[f64], max_points: usize) -> (Vec<f64>, Vec<f64>) {
    let block = x.len().div_ceil(max_points.max(1)).max(1);
    x.chunks(block)
        .zip(y.chunks(block))
        .map(|(xs, ys)| {
            let (i, &m) = ys
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty chunk");
            (xs[i], m)
        })
        .unzip()
}

pub(crate) fn monotone(values: &[f64]) -> (bool, bool) {
    let inc = values.windows(2).all(|w| w[1] > w[0]);
    let dec = values.windows(2).all(|w| w[1] < w[0]);
    (inc, dec)
}

pub(crate) fn fmt_list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}
