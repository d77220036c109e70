use std::f64::consts::PI;

use fenc_core::fitkit::{self, FitResult, Model};
use fenc_core::nvmodel::{self, DrivePoint, OdmrParams};
use fenc_core::photonsim::{simulate_stream, ConstantRate, TransducedRate};
use fenc_core::signals::{Component, Signal, SignalSpec, TelegraphSpec, TelegraphTrace};
use fenc_core::spectral::{self, Spectrum, SpectrumMeta, Window};
use fenc_core::Error;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{derive_seed, sinc, source_digest, Check, Outputs};
use crate::config::{ExperimentConfig, TelegraphConfig};
use crate::error::Result;
use crate::fft::RealFft;
use crate::formats::{fit_json, spectrum_table, Table};
use crate::plot::{Plot, Series};
use crate::tagfile;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DwellResult {
    /// Configured mean dwell, seconds.
    pub dwell: f64,
    pub photon_dwell: f64,
    pub photon_dwell_sigma: f64,
    pub photon_amplitude: f64,
    pub input_dwell: f64,
    pub input_dwell_sigma: f64,
    pub input_amplitude: f64,
    /// Projected peak-to-peak field, tesla.
    pub field_amplitude: f64,
    pub clamped_bins: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub results: Vec<DwellResult>,
    pub dwell_tolerance: f64,
    pub agreement_tolerance: f64,
}

/// Running per-bin sums of periodograms.
struct Accumulator {
    n: usize,
    counts: u64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    template: Option<Spectrum>,
}

impl Accumulator {
    fn new() -> Self {
        Accumulator {
            n: 0,
            counts: 0,
            sum: Vec::new(),
            sum_sq: Vec::new(),
            template: None,
        }
    }

    fn add(&mut self, s: Spectrum) {
        if self.n == 0 {
            self.sum = vec![0.0; s.len()];
            self.sum_sq = vec![0.0; s.len()];
        }
        for (k, &p) in s.psd.iter().enumerate() {
            self.sum[k] += p;
            self.sum_sq[k] += p * p;
        }
        self.n += 1;
        self.template.get_or_insert(s);
    }

    fn mean_counts(&self) -> f64 {
        self.counts as f64 / self.n as f64
    }

    fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.n as f64).collect()
    }

    /// Variance of the mean in each bin.
    fn mean_variance(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(&s, &q)| ((q / n - (s / n).powi(2)) / (n - 1.0).max(1.0)).max(0.0))
            .collect()
    }

    /// Incoherent average as a spectrum; amplitudes are not kept.
    fn spectrum(&self) -> Spectrum {
        let t = self.template.as_ref().expect("at least one spectrum");
        Spectrum {
            amplitudes: vec![Complex64::new(0.0, 0.0); t.len()],
            psd: self.mean(),
            n_averages: self.n,
            meta: SpectrumMeta::default(),
            ..t.clone()
        }
    }
}

/// Field averaged over each bin of width `bw`, from the switching record.
fn bin_average(trace: &TelegraphTrace, n: usize, bw: f64, projection: f64) -> Vec<f64> {
    let records = trace.records();
    let mut out = Vec::with_capacity(n);
    let mut r = 0;
    for j in 0..n {
        let (a, b) = (j as f64 * bw, (j + 1) as f64 * bw);
        while r + 1 < records.len() && records[r + 1].0 <= a {
            r += 1;
        }
        let mut acc = 0.0;
        let mut t = a;
        let mut i = r;
        while t < b {
            let end = records.get(i + 1).map_or(b, |next| next.0.min(b));
            acc += records[i].1 * (end - t);
            t = end;
            i += 1;
        }
        out.push(acc / bw * projection);
    }
    out
}

/// Band-averaged one-sided density and its standard error.
struct Banded {
    f: Vec<f64>,
    y: Vec<f64>,
    sigma: Vec<f64>,
}

fn band(spec: &Spectrum, value: &[f64], variance: &[f64], scale: &dyn Fn(f64) -> f64, edges: &[f64]) -> Banded {
    let duration = spec.duration();
    let mut out = Banded {
        f: Vec::new(),
        y: Vec::new(),
        sigma: Vec::new(),
    };
    for w in edges.windows(2) {
        let lo = (w[0] * duration).ceil().max(1.0) as usize;
        let hi = ((w[1] * duration).ceil() as usize).min(spec.len());
        if hi <= lo {
            continue;
        }
        let (mut f, mut y, mut v) = (0.0, 0.0, 0.0);
        for k in lo..hi {
            let fk = spec.frequency(k);
            let g = spec.fold_weight(k) / duration * scale(fk);
            f += fk;
            y += g * value[k];
            v += g * g * variance[k];
        }
        let m = (hi - lo) as f64;
        out.f.push(f / m);
        out.y.push(y / m);
        out.sigma.push(v.sqrt() / m);
    }
    out
}

fn log_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    fenc_core::lindblad::log_grid(lo, hi, n + 1)
}

fn fit_telegraph(b: &Banded, fallback: Option<&FitResult>, max_it: usize) -> Result<FitResult> {
    let sigma = if b.sigma.iter().all(|&s| s > 0.0) {
        Some(b.sigma.as_slice())
    } else {
        None
    };
    match fitkit::fit_capped(&Model::Telegraph, &b.f, &b.y, sigma, None, max_it) {
        Err(Error::FitRefused(_)) if fallback.is_some() => {
            let init = fallback.map(|f| f.params.clone());
            Ok(fitkit::fit_capped(&Model::Telegraph, &b.f, &b.y, sigma, init.as_deref(), max_it)?)
        }
        r => Ok(r?),
    }
}

struct Setup<'a> {
    config: &'a ExperimentConfig,
    c: &'a TelegraphConfig,
    odmr: OdmrParams,
    drive: DrivePoint,
    projection_angle: f64,
    projection: f64,
    digest: u64,
}

fn run_dwell(s: &Setup, d: usize, dwell: f64, fft: &mut RealFft, out: &mut Outputs) -> Result<DwellResult> {
    let (c, config) = (s.c, s.config);
    let spec = TelegraphSpec {
        mean_dwell: dwell,
        amplitude: c.amplitude,
        trace_duration: c.trace_duration,
        n_traces: c.traces,
        rng_seed: derive_seed(config.seed, &[d as u64, 0]),
    };
    let signal = Signal::new(SignalSpec {
        components: vec![Component::Telegraph(spec)],
        projection_angle: s.projection_angle,
    })?;
    let traces = signal.telegraph_traces(0).expect("one telegraph component");
    let off_rate = ConstantRate(nvmodel::transduce(&s.odmr, &s.drive, 0.0));
    let n = (c.trace_duration / c.bin_width).round() as usize;
    let detector = config.detector();
    let (mut on, mut off, mut input) = (Accumulator::new(), Accumulator::new(), Accumulator::new());

    for (i, trace) in traces.iter().enumerate() {
        for seg in c.protocol.schedule(i) {
            let seed = derive_seed(
                config.seed,
                &[d as u64, 1, i as u64, seg.cycle as u64, seg.index as u64, u64::from(seg.signal_on)],
            );
            let stream = if seg.signal_on {
                let rate = TransducedRate::new(s.odmr, s.drive, &signal).starting_at(i as f64 * c.trace_duration);
                simulate_stream(&rate, c.trace_duration, &detector, seed)?
            } else {
                simulate_stream(&off_rate, c.trace_duration, &detector, seed)?
            }
            .with_source_digest(s.digest);
            if i == 0 && seg.cycle == 0 && seg.index == 0 && c.write_traces {
                let which = if seg.signal_on { "on" } else { "off" };
                out.add(format!("stream_d{d}_trace0_{which}.nvts"), tagfile::to_bytes(&stream));
            }
            let psd = spectral::psd(&spectral::bin(&stream, c.bin_width)?, Window::None, fft)?;
            let acc = if seg.signal_on { &mut on } else { &mut off };
            acc.counts += stream.len() as u64;
            acc.add(psd);
        }
        let field = bin_average(trace, n, c.bin_width, s.projection);
        input.add(spectral::psd_of_samples(field, n, c.bin_width, Window::None, fft)?);
    }

    // the shot-noise floor scales with the mean count, which the signal shifts
    let ratio = on.mean_counts() / off.mean_counts();
    let on_spec = on.spectrum();
    let mut off_spec = off.spectrum();
    off_spec.psd.iter_mut().for_each(|p| *p *= ratio);
    let measured = spectral::onoff_subtract(&on_spec, &off_spec)?;
    let input_spec = input.spectrum();

    // secant slope between the two telegraph levels
    let half = 0.5 * c.amplitude * s.projection;
    let secant = (nvmodel::transduce(&s.odmr, &s.drive, half) - nvmodel::transduce(&s.odmr, &s.drive, -half)) / (2.0 * half);
    let bw = c.bin_width;
    let to_field = move |f: f64| 1.0 / (secant * secant * sinc(PI * f * bw).powi(2));
    let unbin = move |f: f64| 1.0 / sinc(PI * f * bw).powi(2);
    let f_hi = (c.f_max_factor / (PI * dwell)).min(0.8 * on_spec.nyquist());
    let edges = log_edges(c.f_min, f_hi, c.bands);
    let diff: Vec<f64> = on.mean().iter().zip(off.mean()).map(|(a, b)| a - ratio * b).collect();
    let var: Vec<f64> = on
        .mean_variance()
        .iter()
        .zip(off.mean_variance())
        .map(|(a, b)| a + ratio * ratio * b)
        .collect();
    let photon = band(&on_spec, &diff, &var, &to_field, &edges);
    let direct = band(&input_spec, &input.mean(), &input.mean_variance(), &unbin, &edges);

    let max_it = config.fit_choices().max_iterations;
    let input_fit = fit_telegraph(&direct, None, max_it)?;
    let photon_fit = fit_telegraph(&photon, Some(&input_fit), max_it)?;
    let expected = fitkit::TelegraphModel {
        amplitude: 2.0 * half,
        dwell,
    };

    out.csv(format!("measured_psd_d{d}.csv"), &spectrum_table(&measured));
    out.csv(format!("input_psd_d{d}.csv"), &spectrum_table(&input_spec));
    out.add(format!("fit_photon_d{d}.json"), fit_json(&photon_fit));
    out.add(format!("fit_input_d{d}.json"), fit_json(&input_fit));
    let mut bands = Table::new(&[
        "frequency_hz",
        "measured_t2_per_hz",
        "measured_sigma",
        "input_t2_per_hz",
        "input_sigma",
        "photon_fit",
        "input_fit",
        "expected",
    ])
    .with_meta("mean_dwell_s", dwell)
    .with_meta("traces", c.traces);
    for j in 0..photon.f.len() {
        let f = photon.f[j];
        bands.push_f64(&[
            f,
            photon.y[j],
            photon.sigma[j],
            direct.y[j],
            direct.sigma[j],
            photon_fit.eval(f),
            input_fit.eval(f),
            fitkit::telegraph_psd(&expected, f),
        ]);
    }
    out.csv(format!("bands_d{d}.csv"), &bands);
    let model = |fit: &FitResult| photon.f.iter().map(|&f| fit.eval(f)).collect::<Vec<f64>>();
    out.svg(
        format!("psd_d{d}.svg"),
        &Plot::new(&format!("Telegraph spectrum, T = {:.2} ms", dwell * 1e3), "frequency (Hz)", "field PSD (T^2/Hz)")
            .log_log()
            .with(Series::dots("photon stream (on - off)", &photon.f, &photon.y))
            .with(Series::dots("input trace", &direct.f, &direct.y))
            .with(Series::line("fit, photon stream", &photon.f, &model(&photon_fit)))
            .with(Series::line("fit, input trace", &photon.f, &model(&input_fit))),
    );
    if c.write_traces {
        let mut t = Table::new(&["trace", "time_s", "level_t"]).with_meta("mean_dwell_s", dwell);
        for tr in traces {
            for (time, level) in tr.records() {
                t.push(vec![tr.id.to_string(), time.to_string(), level.to_string()]);
            }
        }
        out.csv(format!("traces_d{d}.csv"), &t);
    }
    let pm = photon_fit.telegraph().expect("telegraph model");
    let im = input_fit.telegraph().expect("telegraph model");
    Ok(DwellResult {
        dwell,
        photon_dwell: pm.dwell,
        photon_dwell_sigma: photon_fit.sigmas[1],
        photon_amplitude: pm.amplitude,
        input_dwell: im.dwell,
        input_dwell_sigma: input_fit.sigmas[1],
        input_amplitude: im.amplitude,
        field_amplitude: 2.0 * half,
        clamped_bins: measured.meta.clamped_bins,
        converged: photon_fit.converged && input_fit.converged,
    })
}

pub fn run(config: &ExperimentConfig) -> Result<Outputs> {
    let c = config.telegraph.clone().unwrap_or_default();
    let odmr = config.odmr();
    let angle = config.signal().projection_angle;
    let setup = Setup {
        config,
        c: &c,
        odmr,
        drive: DrivePoint::at_sensing_point(&odmr),
        projection_angle: angle,
        projection: angle.cos(),
        digest: source_digest(config),
    };
    let mut out = Outputs::default();
    let mut fft = RealFft::new();
    let results = c
        .dwell_times
        .iter()
        .enumerate()
        .map(|(d, &t)| run_dwell(&setup, d, t, &mut fft, &mut out))
        .collect::<Result<Vec<_>>>()?;
    out.set_summary(&Summary {
        results,
        dwell_tolerance: c.dwell_tolerance,
        agreement_tolerance: c.agreement_tolerance,
    });
    Ok(out)
}

pub fn evaluate(s: &Summary) -> Vec<Check> {
    let mut checks = Vec::new();
    for r in &s.results {
        let ms = format!("{:.6}", r.dwell * 1e3).trim_end_matches('0').trim_end_matches('.').to_string();
        checks.push(Check::new(format!("fits converged (T = {ms} ms)"), r.converged, r.converged.to_string(), "true"));
        checks.push(Check::relative(format!("photon-stream T (T = {ms} ms)"), r.photon_dwell, r.dwell, s.dwell_tolerance));
        checks.push(Check::relative(
            format!("photon vs input-trace T (T = {ms} ms)"),
            r.photon_dwell,
            r.input_dwell,
            s.agreement_tolerance,
        ));
    }
    checks
}
