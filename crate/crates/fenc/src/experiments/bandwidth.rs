use std::f64::consts::PI;

use fenc_core::fitkit::{self, Model};
use fenc_core::lindblad::log_grid;
use fenc_core::photonsim::{simulate_stream, DetectorModel, SinusoidalRate, PS_PER_SECOND};
use fenc_core::spectral::{self, NoiseBand, Window};
use serde::{Deserialize, Serialize};

use super::{derive_seed, fmt_list, monotone, sinc, source_digest, Check, Outputs};
use crate::config::{BandwidthSweepConfig, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::fft::RealFft;
use crate::formats::{fit_json, Table};
use crate::plot::{Plot, Series};
use crate::tagfile;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Entry {
    /// W, when the cutoff came from the calibration.
    pub power: Option<f64>,
    pub clamped: bool,
    /// Hz
    pub cutoff: f64,
    pub fitted_cutoff: f64,
    pub cutoff_sigma: f64,
    pub exponent: f64,
    pub exponent_sigma: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub entries: Vec<Entry>,
    pub by_power: bool,
    pub cutoff_tolerance: f64,
    pub exponent_target: f64,
    pub exponent_tolerance: f64,
}

/// Largest 1-2-5 step in picoseconds not above `target_ps` that divides
/// `duration_ps`.
fn bin_width_ps(target_ps: f64, duration_ps: u64) -> Result<u64> {
    let mut decade: u64 = 1;
    let mut best = None;
    while (decade as f64) <= target_ps {
        for m in [1, 2, 5] {
            let w = decade * m;
            if (w as f64) <= target_ps && w >= 2 && duration_ps % w == 0 {
                best = Some(w);
            }
        }
        decade *= 10;
    }
    best.ok_or_else(|| {
        CliError::Config("bandwidth_sweep.duration admits no bin width fine enough for the highest frequency".into())
    })
}

/// Test frequencies snapped to the record's frequency grid.
fn frequencies(fc: f64, c: &BandwidthSweepConfig) -> Vec<f64> {
    let df = 1.0 / c.duration;
    let mut f: Vec<f64> = log_grid(fc / c.span, fc * c.span, c.points)
        .into_iter()
        .map(|f| (f / df).round().max(1.0) * df)
        .collect();
    f.dedup();
    f
}

pub fn run(config: &ExperimentConfig) -> Result<Outputs> {
    let c = config.bandwidth_sweep.clone().unwrap_or_default();
    let targets: Vec<(Option<f64>, f64, bool)> = match (&c.powers, &c.cutoffs) {
        (Some(p), _) => p
            .iter()
            .map(|&p| {
                let b = c.calibration.bandwidth_at(p);
                (Some(p), b.value, b.clamped)
            })
            .collect(),
        (None, Some(fc)) => fc.iter().map(|&f| (None, f, false)).collect(),
        (None, None) => BandwidthSweepConfig::DEFAULT_CUTOFFS.iter().map(|&f| (None, f, false)).collect(),
    };
    let base = config.detector();
    let duration_ps = (c.duration * PS_PER_SECOND).round() as u64;
    let digest = source_digest(config);
    let mut fft = RealFft::new();
    let mut out = Outputs::default();
    let mut table = Table::new(&[
        "curve",
        "power_w",
        "cutoff_hz",
        "frequency_hz",
        "response",
        "simulated_filter",
        "fit",
    ])
    .with_meta("kind", "bandwidth-sweep");
    let mut plot = Plot::new("Detection roll-off", "frequency (Hz)", "normalized response power").log_log();
    let mut entries = Vec::new();

    for (i, &(power, fc, clamped)) in targets.iter().enumerate() {
        let detector = DetectorModel {
            bandwidth: Some(fc),
            ..base
        };
        let freqs = frequencies(fc, &c);
        let f_hi = *freqs.last().expect("non-empty grid");
        let bw_ps = bin_width_ps(PS_PER_SECOND / (20.0 * f_hi), duration_ps)?;
        let bw = bw_ps as f64 / PS_PER_SECOND;
        // unfiltered line periodogram, |depth * mean * duration / 2|^2
        let full = (c.depth * c.mean_rate * c.duration / 2.0).powi(2);
        let k_fc = freqs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 / fc).ln().abs().total_cmp(&(b.1 / fc).ln().abs()))
            .map(|(j, _)| j)
            .expect("non-empty grid");
        let mut response = Vec::with_capacity(freqs.len());
        let mut sigma = Vec::with_capacity(freqs.len());
        for (j, &f) in freqs.iter().enumerate() {
            let rate = SinusoidalRate {
                mean: c.mean_rate,
                depth: c.depth,
                frequency: f,
                phase: 0.0,
            };
            let stream = simulate_stream(&rate, c.duration, &detector, derive_seed(config.seed, &[i as u64, j as u64]))?
                .with_source_digest(digest);
            let spec = spectral::psd(&spectral::bin(&stream, bw)?, Window::None, &mut fft)?;
            let k = spec
                .exact_bin(f)
                .ok_or_else(|| CliError::Config(format!("test frequency {f} Hz is off the frequency grid")))?;
            let band = NoiseBand::new(spec.resolution(), spec.nyquist()).excluding(&[f]);
            let floor = spectral::noise_floor(&spec, &band)
                .ok_or_else(|| CliError::Config("record too short for a noise floor".into()))?;
            let mu = spectral::mean_from_median(floor);
            let excess = spec.psd[k] - mu;
            let norm = sinc(PI * f * bw).powi(2) * full;
            response.push(excess / norm);
            // periodogram bin of a line plus exponential noise
            sigma.push((mu * mu + 2.0 * excess.max(0.0) * mu).sqrt() / norm);
            if j == k_fc {
                out.add(format!("stream_curve{i}.nvts"), tagfile::to_bytes(&stream));
            }
        }
        let max_it = config.fit_choices().max_iterations;
        let fit = fitkit::fit_capped(&Model::Bandwidth, &freqs, &response, Some(&sigma), None, max_it)?;
        let model = fit.bandwidth().expect("bandwidth model");
        for (j, &f) in freqs.iter().enumerate() {
            table.push(vec![
                i.to_string(),
                power.map(|p| p.to_string()).unwrap_or_default(),
                fc.to_string(),
                f.to_string(),
                response[j].to_string(),
                detector.power_response(f).to_string(),
                fit.eval(f).to_string(),
            ]);
        }
        let label = match power {
            Some(p) => format!("{:.0} uW", p * 1e6),
            None => format!("fc = {fc:.3e} Hz"),
        };
        let fitted: Vec<f64> = freqs.iter().map(|&f| fit.eval(f)).collect();
        plot = plot
            .with(Series::dots(&label, &freqs, &response))
            .with(Series::line(&format!("fit {label}"), &freqs, &fitted));
        out.add(format!("fit_curve{i}.json"), fit_json(&fit));
        entries.push(Entry {
            power,
            clamped,
            cutoff: fc,
            fitted_cutoff: model.cutoff,
            cutoff_sigma: fit.sigmas[1],
            exponent: model.exponent,
            exponent_sigma: fit.sigmas[2],
            converged: fit.converged,
        });
    }
    out.csv("response.csv", &table);
    out.svg("response.svg", &plot);
    if c.powers.is_some() {
        let p: Vec<f64> = entries.iter().map(|e| e.power.unwrap_or(f64::NAN) * 1e6).collect();
        let f: Vec<f64> = entries.iter().map(|e| e.fitted_cutoff).collect();
        let cal: Vec<f64> = entries.iter().map(|e| e.cutoff).collect();
        out.svg(
            "cutoff_vs_power.svg",
            &Plot::new("Fitted cutoff against laser power", "power (uW)", "cutoff (Hz)")
                .with(Series::dots("fitted", &p, &f))
                .with(Series::line("calibration", &p, &cal)),
        );
    }
    out.set_summary(&Summary {
        entries,
        by_power: c.powers.is_some(),
        cutoff_tolerance: c.cutoff_tolerance,
        exponent_target: c.exponent_target,
        exponent_tolerance: c.exponent_tolerance,
    });
    Ok(out)
}

pub fn evaluate(s: &Summary) -> Vec<Check> {
    let mut checks = Vec::new();
    for e in &s.entries {
        let tag = match e.power {
            Some(p) => format!("{:.0} uW", p * 1e6),
            None => format!("{:.0} Hz", e.cutoff),
        };
        checks.push(Check::new(format!("fit converged ({tag})"), e.converged, e.converged.to_string(), "true"));
        checks.push(Check::relative(format!("cutoff ({tag})"), e.fitted_cutoff, e.cutoff, s.cutoff_tolerance));
        checks.push(Check::within(format!("exponent ({tag})"), e.exponent, s.exponent_target, s.exponent_tolerance));
    }
    let fitted: Vec<f64> = s.entries.iter().map(|e| e.fitted_cutoff).collect();
    let along = if s.by_power { "laser power" } else { "configured cutoff" };
    checks.push(Check::new(
        format!("fitted cutoff increases with {along}"),
        monotone(&fitted).0,
        fmt_list(&fitted),
        "strictly increasing",
    ));
    checks
}
