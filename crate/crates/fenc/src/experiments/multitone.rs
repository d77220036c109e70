use fenc_core::nvmodel::DrivePoint;
use fenc_core::photonsim::{simulate_stream, TransducedRate};
use fenc_core::signals::{Component, Signal};
use fenc_core::spectral::{self, Spectrum};
use serde::{Deserialize, Serialize};

use super::{decimate_max, derive_seed, source_digest, Check, Outputs};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::fft::RealFft;
use crate::formats::{spectrum_table, Table};
use crate::plot::{Plot, Series};
use crate::tagfile;

const FLOOR_EXCLUDE: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Peak {
    /// Hz
    pub frequency: f64,
    pub expected_bin: usize,
    /// Largest bin within the search window.
    pub found_bin: usize,
    pub power: f64,
    /// Excess over the floor in noise standard deviations.
    pub significance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub resolution: f64,
    pub n_averages: usize,
    pub floor_mean: f64,
    pub peaks: Vec<Peak>,
    /// Significance of the lowest bin between each pair of adjacent tones.
    pub valleys: Vec<f64>,
    pub detection_sigma: f64,
}

/// Mean periodogram over all non-DC bins away from the tones.
fn floor_mean(spec: &Spectrum, tone_bins: &[usize]) -> f64 {
    let (sum, n) = (1..spec.len())
        .filter(|k| tone_bins.iter().all(|t| k.abs_diff(*t) > FLOOR_EXCLUDE))
        .fold((0.0, 0usize), |(s, n), k| (s + spec.psd[k], n + 1));
    sum / n.max(1) as f64
}

pub fn run(config: &ExperimentConfig) -> Result<Outputs> {
    let c = config.multitone.clone().unwrap_or_default();
    let odmr = config.odmr();
    let spec = config.signal();
    let mut tones: Vec<f64> = spec
        .components
        .iter()
        .filter_map(|c| match c {
            Component::Tone(t) => Some(t.frequency),
            _ => None,
        })
        .collect();
    tones.sort_by(f64::total_cmp);
    let signal = Signal::new(spec)?;
    let rate = TransducedRate::new(odmr, DrivePoint::at_sensing_point(&odmr), &signal);
    let duration = c.segment * c.segments as f64;
    let stream = simulate_stream(&rate, duration, &config.detector(), derive_seed(config.seed, &[0]))?
        .with_source_digest(source_digest(config));
    let mut fft = RealFft::new();
    let spectra = spectral::bin_segments(&stream, c.bin_width, c.segment)?
        .iter()
        .map(|s| spectral::psd(s, c.window, &mut fft))
        .collect::<fenc_core::Result<Vec<_>>>()?;
    let avg = spectral::average_psd(&spectra)?;
    drop(spectra);

    let bins = tones
        .iter()
        .map(|&f| {
            avg.exact_bin(f)
                .ok_or_else(|| CliError::Config(format!("tone at {f} Hz is off the {} Hz grid", avg.resolution())))
        })
        .collect::<Result<Vec<usize>>>()?;
    let mu = floor_mean(&avg, &bins);
    let sd = mu / (avg.n_averages as f64).sqrt();
    let z = |p: f64| (p - mu) / sd;
    let peaks: Vec<Peak> = tones
        .iter()
        .zip(&bins)
        .map(|(&f, &k)| {
            let lo = k.saturating_sub(c.search_bins).max(1);
            let hi = (k + c.search_bins).min(avg.len() - 1);
            let found = (lo..=hi).max_by(|a, b| avg.psd[*a].total_cmp(&avg.psd[*b])).expect("non-empty window");
            Peak {
                frequency: f,
                expected_bin: k,
                found_bin: found,
                power: avg.psd[k],
                significance: z(avg.psd[k]),
            }
        })
        .collect();
    let valleys: Vec<f64> = bins
        .windows(2)
        .map(|w| {
            let m = (w[0] + 1..w[1]).map(|k| avg.psd[k]).fold(f64::INFINITY, f64::min);
            z(m)
        })
        .collect();

    let mut out = Outputs::default();
    out.csv("spectrum.csv", &spectrum_table(&avg));
    let mut table = Table::new(&["frequency_hz", "expected_bin", "found_bin", "psd", "significance"])
        .with_meta("floor_mean", mu)
        .with_meta("n_averages", avg.n_averages);
    for p in &peaks {
        table.push(vec![
            p.frequency.to_string(),
            p.expected_bin.to_string(),
            p.found_bin.to_string(),
            p.power.to_string(),
            p.significance.to_string(),
        ]);
    }
    out.csv("peaks.csv", &table);
    let f: Vec<f64> = avg.frequencies().collect();
    let (x, y) = decimate_max(&f[1..], &avg.psd[1..], 4000);
    let (px, py): (Vec<f64>, Vec<f64>) = peaks.iter().map(|p| (p.frequency, p.power)).unzip();
    out.svg(
        "psd.svg",
        &Plot::new("Averaged periodogram", "frequency (Hz)", "periodogram (counts^2)")
            .log_log()
            .with(Series::line("psd (block max)", &x, &y))
            .with(Series::dots("tones", &px, &py)),
    );
    if c.write_stream {
        out.add("stream.nvts", tagfile::to_bytes(&stream));
    }
    out.set_summary(&Summary {
        resolution: avg.resolution(),
        n_averages: avg.n_averages,
        floor_mean: mu,
        peaks,
        valleys,
        detection_sigma: c.detection_sigma,
    });
    Ok(out)
}

pub fn evaluate(s: &Summary) -> Vec<Check> {
    let mut checks = Vec::new();
    for p in &s.peaks {
        checks.push(Check::new(
            format!("peak at {} Hz in its bin", p.frequency),
            p.found_bin == p.expected_bin,
            p.found_bin.to_string(),
            p.expected_bin.to_string(),
        ));
        checks.push(Check::new(
            format!("peak at {} Hz detected", p.frequency),
            p.significance >= s.detection_sigma,
            format!("{:.1} sigma", p.significance),
            format!(">= {} sigma", s.detection_sigma),
        ));
    }
    for (i, v) in s.valleys.iter().enumerate() {
        checks.push(Check::new(
            format!("peaks {} and {} resolved", s.peaks[i].frequency, s.peaks[i + 1].frequency),
            *v < s.detection_sigma,
            format!("{v:.1} sigma between"),
            format!("< {} sigma", s.detection_sigma),
        ));
    }
    checks
}
