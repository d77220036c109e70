use fenc_core::fitkit::power_law_loglog;
use fenc_core::nvmodel::{self, DrivePoint};
use fenc_core::photonsim::{simulate_stream, TransducedRate};
use fenc_core::signals::{Component, Signal};
use fenc_core::spectral::{self, NoiseBand, Window};
use serde::{Deserialize, Serialize};

use super::{derive_seed, source_digest, Check, Outputs};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::fft::RealFft;
use crate::formats::{fit_json, spectrum_table, Table};
use crate::plot::{Plot, Series};
use crate::tagfile;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub times: Vec<f64>,
    pub snr: Vec<f64>,
    pub amplitude: f64,
    pub exponent: f64,
    pub exponent_sigma: f64,
    pub exponent_target: f64,
    pub exponent_tolerance: f64,
    /// Projected tone amplitude, tesla.
    pub field_amplitude: f64,
    pub eta_ideal: f64,
    /// From the SNR at the longest averaging time; absent when that SNR is 0.
    pub eta_empirical: Option<f64>,
    /// From the fitted prefactor.
    pub eta_fit: f64,
    pub sensitivity_factor: f64,
}

pub fn run(config: &ExperimentConfig) -> Result<Outputs> {
    let c = config.snr_scaling.clone().unwrap_or_default();
    let odmr = config.odmr();
    let spec = config.signal();
    let Component::Tone(tone) = spec.components[0] else {
        return Err(CliError::Config("snr-scaling needs a tone".into()));
    };
    let projection = spec.projection().abs();
    let signal = Signal::new(spec)?;
    let drive = DrivePoint::at_sensing_point(&odmr);
    let rate = TransducedRate::new(odmr, drive, &signal);
    let t_max = *c.times.last().expect("validated non-empty");
    let stream = simulate_stream(&rate, t_max, &config.detector(), derive_seed(config.seed, &[0]))?
        .with_source_digest(source_digest(config));
    let series = spectral::bin(&stream, c.bin_width)?;

    let mut out = Outputs::default();
    let mut fft = RealFft::new();
    let band = NoiseBand::new(c.noise_band[0], c.noise_band[1]);
    let mut runs = Vec::with_capacity(c.times.len());
    for &t in &c.times {
        let n = ((t / c.bin_width).round() as usize).min(series.len());
        let s = spectral::psd_of_samples(series.counts[..n].iter().map(|&v| f64::from(v)), n, c.bin_width, Window::None, &mut fft)?;
        if s.exact_bin(tone.frequency).is_none() {
            return Err(CliError::Config(format!(
                "tone at {} Hz is not on the frequency grid of the {t} s record",
                tone.frequency
            )));
        }
        runs.push((t, s));
    }
    let scaling = spectral::snr_scaling(&runs, tone.frequency, &band)?;

    let usable: Vec<_> = scaling.points.iter().filter(|p| p.snr > 0.0).collect();
    let fit = power_law_loglog(
        &usable.iter().map(|p| p.time).collect::<Vec<_>>(),
        &usable.iter().map(|p| p.snr).collect::<Vec<_>>(),
    )?;
    let field = tone.amplitude * projection;
    let last = scaling.points.last().expect("at least four points");
    let eta_empirical = (last.snr > 0.0).then(|| field * last.time.sqrt() / (2f64.sqrt() * last.snr));

    let mut table = Table::new(&["time_s", "signal_power", "noise_floor", "snr", "fit"])
        .with_meta("kind", "snr-scaling")
        .with_meta("tone_hz", tone.frequency)
        .with_meta("field_amplitude_t", field);
    for p in &scaling.points {
        table.push_f64(&[p.time, p.signal_power, p.noise_floor, p.snr, fit.eval(p.time)]);
    }
    out.csv("snr.csv", &table);
    out.add("snr_fit.json", fit_json(&fit));

    let (t0, first) = &runs[0];
    out.csv(format!("spectrum_{t0}s.csv"), &spectrum_table(first));
    let (tl, longest) = runs.last().expect("non-empty");
    let k = longest.bin_of(tone.frequency);
    let half = (20.0 * tl) as usize;
    let range = k.saturating_sub(half)..(k + half).min(longest.len() - 1);
    let fx: Vec<f64> = range.clone().map(|j| longest.frequency(j)).collect();
    let fy: Vec<f64> = range.map(|j| longest.psd[j]).collect();
    out.svg(
        "psd_zoom.svg",
        &Plot::new(&format!("Periodogram near the tone, {tl} s"), "frequency (Hz)", "periodogram (counts^2)")
            .log_y()
            .with(Series::line("psd", &fx, &fy)),
    );
    let ts: Vec<f64> = scaling.points.iter().map(|p| p.time).collect();
    let ys: Vec<f64> = scaling.points.iter().map(|p| p.snr).collect();
    let model: Vec<f64> = ts.iter().map(|&t| fit.eval(t)).collect();
    out.svg(
        "snr.svg",
        &Plot::new("SNR against averaging time", "time (s)", "SNR")
            .log_log()
            .with(Series::dots("measured", &ts, &ys))
            .with(Series::line(&format!("fit, b = {:.3}", scaling.exponent), &ts, &model)),
    );
    if c.write_stream {
        out.add("stream.nvts", tagfile::to_bytes(&stream));
    }

    out.set_summary(&Summary {
        times: ts,
        snr: ys,
        amplitude: scaling.amplitude,
        exponent: scaling.exponent,
        exponent_sigma: scaling.exponent_sigma,
        exponent_target: c.exponent_target,
        exponent_tolerance: c.exponent_tolerance,
        field_amplitude: field,
        eta_ideal: nvmodel::sensitivity(&odmr),
        eta_empirical,
        eta_fit: scaling.empirical_sensitivity(field),
        sensitivity_factor: c.sensitivity_factor,
    });
    Ok(out)
}

pub fn evaluate(s: &Summary) -> Vec<Check> {
    let ratio = s.eta_empirical.map(|e| e / s.eta_ideal);
    vec![
        Check::within("SNR exponent b", s.exponent, s.exponent_target, s.exponent_tolerance),
        Check::new(
            "empirical/ideal sensitivity",
            ratio.is_some_and(|r| r >= 1.0 / s.sensitivity_factor && r <= s.sensitivity_factor),
            ratio.map_or_else(|| "no signal at the longest time".to_string(), |r| format!("{r:.4}")),
            format!("within ×{}", s.sensitivity_factor),
        ),
    ]
}
