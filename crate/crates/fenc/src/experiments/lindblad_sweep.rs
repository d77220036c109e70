use fenc_core::fitkit::{self, Model};
use fenc_core::lindblad::{self, log_grid, Diagnostics, Population, ResponseOptions};
use serde::{Deserialize, Serialize};

use super::{fmt_list, monotone, Check, Outputs};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::formats::{fit_json, Table};
use crate::plot::{Plot, Series};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub saturations: Vec<f64>,
    pub cutoffs: Vec<f64>,
    pub cutoff_sigmas: Vec<f64>,
    pub exponents: Vec<f64>,
    pub exponent_sigmas: Vec<f64>,
    pub converged: Vec<bool>,
    pub diagnostics: Vec<Diagnostics>,
    pub trace_tolerance: f64,
    pub hermiticity_tolerance: f64,
    pub positivity_tolerance: f64,
}

pub fn run(config: &ExperimentConfig) -> Result<Outputs> {
    let c = config.lindblad_sweep.clone().unwrap_or_default();
    let base = config.lindblad();
    let freqs = log_grid(c.f_min, c.f_max, c.points);
    let curves = lindblad::sweep_response(&base, &c.saturations, &freqs, c.offset, &ResponseOptions::default())?;
    let max_it = config.fit_choices().max_iterations;

    let mut out = Outputs::default();
    let mut table = Table::new(&["saturation", "frequency_hz", "amplitude", "power", "fit"]).with_meta("kind", "lindblad-sweep");
    let mut plot = Plot::new("Quasi-steady response", "signal frequency (Hz)", "response power").log_log();
    let mut s = Summary {
        saturations: c.saturations.clone(),
        cutoffs: Vec::new(),
        cutoff_sigmas: Vec::new(),
        exponents: Vec::new(),
        exponent_sigmas: Vec::new(),
        converged: Vec::new(),
        diagnostics: Vec::new(),
        trace_tolerance: lindblad::TRACE_TOL,
        hermiticity_tolerance: lindblad::HERMITICITY_TOL,
        positivity_tolerance: lindblad::POSITIVITY_TOL,
    };
    for (i, curve) in curves.iter().enumerate() {
        let power = curve.power();
        let fit = fitkit::fit_capped(&Model::Bandwidth, &curve.frequencies, &power, None, None, max_it)?;
        for (j, &f) in curve.frequencies.iter().enumerate() {
            table.push_f64(&[curve.saturation, f, curve.amplitudes[j], power[j], fit.eval(f)]);
        }
        let fitted: Vec<f64> = freqs.iter().map(|&f| fit.eval(f)).collect();
        plot = plot
            .with(Series::dots(&format!("s = {}", curve.saturation), &freqs, &power))
            .with(Series::line(&format!("fit s = {}", curve.saturation), &freqs, &fitted));
        out.add(format!("fit_s{i}.json"), fit_json(&fit));
        let m = fit.bandwidth().expect("bandwidth model");
        s.cutoffs.push(m.cutoff);
        s.cutoff_sigmas.push(fit.sigmas[1]);
        s.exponents.push(m.exponent);
        s.exponent_sigmas.push(fit.sigmas[2]);
        s.converged.push(fit.converged);

        let p = base.with_saturation(curve.saturation);
        let span = c.check_relaxation_times / p.slowest_relaxation().unwrap_or(1.0);
        let traj = lindblad::evolve(&p, Population::Down, (0.0, span), p.max_step())?;
        s.diagnostics.push(traj.diagnostics);
    }
    out.csv("response.csv", &table);
    out.svg("response.svg", &plot);
    let cut = Plot::new("Fitted roll-off against saturation", "saturation s", "value");
    out.svg(
        "cutoff_vs_saturation.svg",
        &cut.log_y().with(Series::dots("cutoff (Hz)", &s.saturations, &s.cutoffs)),
    );
    out.set_summary(&s);
    Ok(out)
}

pub fn evaluate(s: &Summary) -> Vec<Check> {
    let mut checks = Vec::new();
    for (i, d) in s.diagnostics.iter().enumerate() {
        let sat = s.saturations[i];
        checks.push(Check::new(
            format!("trace preserved (s = {sat})"),
            d.max_trace_error <= s.trace_tolerance,
            format!("{:.3e}", d.max_trace_error),
            format!("<= {:e}", s.trace_tolerance),
        ));
        checks.push(Check::new(
            format!("hermiticity (s = {sat})"),
            d.max_hermiticity_error <= s.hermiticity_tolerance,
            format!("{:.3e}", d.max_hermiticity_error),
            format!("<= {:e}", s.hermiticity_tolerance),
        ));
        checks.push(Check::new(
            format!("positivity (s = {sat})"),
            d.min_eigenvalue >= -s.positivity_tolerance,
            format!("{:.3e}", d.min_eigenvalue),
            format!(">= -{:e}", s.positivity_tolerance),
        ));
        checks.push(Check::new(
            format!("fit converged (s = {sat})"),
            s.converged[i],
            s.converged[i].to_string(),
            "true",
        ));
    }
    for (name, values) in [("cutoff", &s.cutoffs), ("exponent", &s.exponents)] {
        let (inc, dec) = monotone(values);
        checks.push(Check::new(
            format!("{name} monotone in saturation"),
            inc || dec,
            fmt_list(values),
            "strictly monotone",
        ));
    }
    checks
}
