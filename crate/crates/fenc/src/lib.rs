//! Experiment runner, file formats and FFT backend built on `fenc-core`.
//!
//! A TOML [`config::ExperimentConfig`] names one experiment kind; [`runner::run`]
//! executes it and writes data files, plots, a summary and a
//! [`manifest::RunManifest`] into one directory; [`runner::verify`] checks
//! such a directory later.

pub mod bench;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod formats;
pub mod manifest;
pub mod plot;
pub mod runner;
pub mod tagfile;

pub use error::{CliError, ExitCode, Result};
