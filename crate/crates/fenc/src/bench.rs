//! Throughput of streaming binning plus periodogram averaging.

use std::path::PathBuf;
use std::time::Instant;

use fenc_core::photonsim::{simulate_stream, ConstantRate, DetectorModel};
use fenc_core::spectral::{self, SegmentBinner, TimeSeries, Window};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::fft::RealFft;
use crate::tagfile::TagReader;

#[derive(Debug, Clone)]
pub struct BenchOptions {
    /// seconds
    pub duration: f64,
    /// photons/s
    pub rate: f64,
    /// seconds
    pub bin_width: f64,
    /// seconds
    pub segment: f64,
    pub seed: u64,
    /// Read tags from this file instead of simulating them.
    pub input: Option<PathBuf>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            duration: 60.0,
            rate: 72e3,
            bin_width: 100e-9,
            segment: 1.0,
            seed: 1,
            input: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub duration_s: f64,
    pub bin_width_s: f64,
    pub tags: u64,
    pub segments: usize,
    pub bins_per_segment: usize,
    pub simulate_seconds: f64,
    /// Wall-clock time for binning and spectra.
    pub process_seconds: f64,
    pub tags_per_second: f64,
    pub bins_per_second: f64,
    /// Mean of the averaged periodogram, a cheap consistency figure.
    pub mean_psd: f64,
}

struct Averager {
    fft: RealFft,
    window: Window,
    sum: Vec<f64>,
    count: usize,
    error: Option<fenc_core::Error>,
}

impl Averager {
    fn push(&mut self, series: TimeSeries) {
        if self.error.is_some() {
            return;
        }
        match spectral::psd(&series, self.window, &mut self.fft) {
            Ok(s) => {
                if self.sum.is_empty() {
                    self.sum = vec![0.0; s.len()];
                }
                for (a, p) in self.sum.iter_mut().zip(&s.psd) {
                    *a += p;
                }
                self.count += 1;
            }
            Err(e) => self.error = Some(e),
        }
    }
}

pub fn run(opts: &BenchOptions) -> Result<BenchReport> {
    let t_sim = Instant::now();
    let (tags, duration_ps): (Box<dyn Iterator<Item = Result<u64>>>, u64) = match &opts.input {
        Some(path) => {
            let reader = TagReader::open(path)?;
            let d = reader.header().duration_ps;
            (Box::new(reader), d)
        }
        None => {
            if !(opts.duration > 0.0 && opts.rate >= 0.0) {
                return Err(CliError::Config("bench needs duration > 0 and rate >= 0".into()));
            }
            let stream = simulate_stream(&ConstantRate(opts.rate), opts.duration, &DetectorModel::ideal(), opts.seed)?;
            let d = stream.duration_ps();
            (Box::new(stream.into_timestamps().into_iter().map(Ok)), d)
        }
    };
    let simulate_seconds = t_sim.elapsed().as_secs_f64();

    let bins = (opts.segment / opts.bin_width).round() as usize;
    if bins < 2 {
        return Err(CliError::Config("bench segment must hold at least 2 bins".into()));
    }
    let start = Instant::now();
    let mut binner = SegmentBinner::new(opts.bin_width, bins, 0)?;
    let mut avg = Averager {
        fft: RealFft::new(),
        window: Window::None,
        sum: Vec::new(),
        count: 0,
        error: None,
    };
    let mut sink = |s: TimeSeries| avg.push(s);
    let mut n_tags = 0u64;
    for t in tags {
        binner.push(t?, &mut sink)?;
        n_tags += 1;
    }
    binner.finish(duration_ps, &mut sink);
    if let Some(e) = avg.error {
        return Err(e.into());
    }
    let process_seconds = start.elapsed().as_secs_f64();
    let mean_psd = if avg.count > 0 {
        avg.sum[1..].iter().sum::<f64>() / ((avg.sum.len() - 1) as f64 * avg.count as f64)
    } else {
        0.0
    };
    let duration = duration_ps as f64 / 1e12;
    Ok(BenchReport {
        duration_s: duration,
        bin_width_s: opts.bin_width,
        tags: n_tags,
        segments: avg.count,
        bins_per_segment: bins,
        simulate_seconds,
        process_seconds,
        tags_per_second: n_tags as f64 / process_seconds,
        bins_per_second: (avg.count * bins) as f64 / process_seconds,
        mean_psd,
    })
}

