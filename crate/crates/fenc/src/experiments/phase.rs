use std::f64::consts::PI;

use fenc_core::nvmodel::{self, DrivePoint};
use fenc_core::phaselock::{self, PhasedSpectrum, ReferenceSpec};
use fenc_core::photonsim::{simulate_stream, RateFunction, TransducedRate};
use fenc_core::signals::{wrap_phase, Component, Signal};
use fenc_core::special::bessel_j;
use fenc_core::spectral::{self, Window};
use fenc_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, source_digest, Check, Outputs};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::fft::RealFft;
use crate::formats::{phased_table, Table};
use crate::plot::{Plot, Series};
use crate::tagfile;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CombLine {
    pub order: i64,
    /// Hz
    pub frequency: f64,
    pub bessel: f64,
    /// `|mean|` of the corrected average.
    pub amplitude: f64,
    /// Corrected averaged phase, rad.
    pub phase: f64,
    pub uncorrected_amplitude: f64,
    /// Largest deviation of the noise-free corrected phase from the
    /// zero-offset trace, rad.
    pub phase_spread: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub traces: usize,
    pub rejected: usize,
    pub mod_depth: f64,
    pub lines: Vec<CombLine>,
    /// Least-squares factor between amplitudes and `|J_n|`.
    pub scale: f64,
    /// Uncorrected over corrected comb power.
    pub suppression: f64,
    pub amplitude_tolerance: f64,
    pub phase_spread_limit: f64,
    pub suppression_factor: f64,
}

/// Noise-free counts per bin from the rate at bin centres.
fn expected_counts(rate: &impl RateFunction, n: usize, bw: f64) -> fenc_core::Result<Vec<f64>> {
    (0..n).map(|j| Ok(rate.rate((j as f64 + 0.5) * bw)? * bw)).collect()
}

pub fn run(config: &ExperimentConfig) -> Result<Outputs> {
    let c = config.phase_coherent.clone().unwrap_or_default();
    let odmr = config.odmr();
    let spec = config.signal();
    let Component::PhaseMod(pm) = spec.components[0] else {
        return Err(CliError::Config("phase-coherent needs a phase-mod component".into()));
    };
    let signal = Signal::new(spec)?;
    let drive = DrivePoint::at_sensing_point(&odmr);
    let slope = nvmodel::transduction_slope(&odmr, &drive, 0.0);
    let reference = ReferenceSpec {
        f1: pm.carrier,
        f2: pm.carrier + pm.mod_frequency,
        min_amplitude: phaselock::minimum_reference_field(odmr.count_rate, slope, c.trace_duration, c.phase_limit),
        phase_limit: c.phase_limit,
    };
    reference.validate()?;
    let detector = config.detector();
    let digest = source_digest(config);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0]));
    let offsets: Vec<f64> = (0..c.traces).map(|_| rng.random::<f64>() * c.max_offset).collect();

    let mut out = Outputs::default();
    let mut fft = RealFft::new();
    let mut corrected = Vec::with_capacity(c.traces);
    let mut raw = Vec::with_capacity(c.traces);
    let mut offsets_table = Table::new(&["trace", "offset_s", "phi1_rad", "phi2_rad", "accepted"]);
    for (i, &t0) in offsets.iter().enumerate() {
        let rate = TransducedRate::new(odmr, drive, &signal).starting_at(t0);
        let stream = simulate_stream(&rate, c.trace_duration, &detector, derive_seed(config.seed, &[1, i as u64]))?
            .with_source_digest(digest);
        if i == 0 && c.write_stream {
            out.add("stream_trace0.nvts", tagfile::to_bytes(&stream));
        }
        let s = spectral::psd(&spectral::bin(&stream, c.bin_width)?, Window::None, &mut fft)?;
        match phaselock::extract_reference_phases(&s, &reference) {
            Ok((p1, p2)) => {
                offsets_table.push(vec![i.to_string(), t0.to_string(), p1.to_string(), p2.to_string(), "1".into()]);
                corrected.push(phaselock::phase_correct(&s, p1, p2, &reference));
                raw.push(phaselock::uncorrected(&s, &reference));
            }
            Err(Error::WeakReference { .. }) => {
                offsets_table.push(vec![i.to_string(), t0.to_string(), String::new(), String::new(), "0".into()]);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let rejected = c.traces - corrected.len();
    let avg = phaselock::coherent_average(&corrected)?;
    let avg_raw = phaselock::coherent_average(&raw)?;
    drop((corrected, raw));

    // offset invariance on noise-free traces, the first at zero offset
    let n = (c.trace_duration / c.bin_width).round() as usize;
    let mut clean: Vec<PhasedSpectrum> = Vec::with_capacity(c.invariance_traces);
    for i in 0..c.invariance_traces {
        let t0 = if i == 0 { 0.0 } else { offsets[(i - 1) % offsets.len()] };
        let rate = TransducedRate::new(odmr, drive, &signal).starting_at(t0);
        let s = spectral::psd_of_samples(expected_counts(&rate, n, c.bin_width)?, n, c.bin_width, Window::None, &mut fft)?;
        let (p1, p2) = phaselock::extract_reference_phases(&s, &reference)?;
        clean.push(phaselock::phase_correct(&s, p1, p2, &reference));
    }

    let mut lines = Vec::new();
    for order in c.orders[0]..=c.orders[1] {
        let k = avg
            .bin_of_index(order)
            .ok_or_else(|| CliError::Config(format!("comb order {order} lies off the frequency grid")))?;
        let spread = clean
            .iter()
            .map(|p| wrap_phase(p.phase[k] - clean[0].phase[k]).abs())
            .fold(0.0, f64::max);
        lines.push(CombLine {
            order,
            frequency: avg.spectrum.frequency(k),
            bessel: bessel_j(order as i32, pm.mod_depth),
            amplitude: avg.spectrum.amplitudes[k].norm(),
            phase: avg.phase[k],
            uncorrected_amplitude: avg_raw.spectrum.amplitudes[k].norm(),
            phase_spread: spread,
        });
    }
    let scale = lines.iter().map(|l| l.amplitude * l.bessel.abs()).sum::<f64>()
        / lines.iter().map(|l| l.bessel * l.bessel).sum::<f64>();
    let power = |f: fn(&CombLine) -> f64| lines.iter().map(|l| f(l).powi(2)).sum::<f64>();
    let suppression = power(|l| l.uncorrected_amplitude) / power(|l| l.amplitude);

    out.csv("phased_corrected.csv", &phased_table(&avg));
    out.csv("phased_uncorrected.csv", &phased_table(&avg_raw));
    out.csv("offsets.csv", &offsets_table);
    let mut comb = Table::new(&[
        "order",
        "frequency_hz",
        "bessel",
        "amplitude",
        "scaled_bessel",
        "phase_rad",
        "uncorrected_amplitude",
        "phase_spread_rad",
    ])
    .with_meta("traces", c.traces - rejected)
    .with_meta("mod_depth", pm.mod_depth);
    for l in &lines {
        comb.push_f64(&[
            l.order as f64,
            l.frequency,
            l.bessel,
            l.amplitude,
            scale * l.bessel.abs(),
            l.phase,
            l.uncorrected_amplitude,
            l.phase_spread,
        ]);
    }
    out.csv("comb.csv", &comb);
    let orders: Vec<f64> = lines.iter().map(|l| l.order as f64).collect();
    let amp: Vec<f64> = lines.iter().map(|l| l.amplitude).collect();
    let bes: Vec<f64> = lines.iter().map(|l| scale * l.bessel.abs()).collect();
    let unc: Vec<f64> = lines.iter().map(|l| l.uncorrected_amplitude).collect();
    out.svg(
        "comb.svg",
        &Plot::new("Comb amplitudes after averaging", "comb order n", "|mean amplitude| (counts)")
            .with(Series::dots("corrected", &orders, &amp))
            .with(Series::line("scaled |J_n|", &orders, &bes))
            .with(Series::dots("uncorrected", &orders, &unc)),
    );
    out.set_summary(&Summary {
        traces: c.traces,
        rejected,
        mod_depth: pm.mod_depth,
        lines,
        scale,
        suppression,
        amplitude_tolerance: c.amplitude_tolerance,
        phase_spread_limit: c.phase_spread,
        suppression_factor: c.suppression_factor,
    });
    Ok(out)
}

pub fn evaluate(s: &Summary) -> Vec<Check> {
    let mut checks = Vec::new();
    for l in &s.lines {
        checks.push(Check::relative(
            format!("amplitude n = {}", l.order),
            l.amplitude,
            s.scale * l.bessel.abs(),
            s.amplitude_tolerance,
        ));
        let expected = if l.bessel >= 0.0 { 0.0 } else { PI };
        let err = wrap_phase(l.phase - expected).abs();
        checks.push(Check::new(
            format!("sign n = {}", l.order),
            err < PI / 2.0,
            format!("{:.3} rad", l.phase),
            format!("{expected:.3} rad (sign of J_n)"),
        ));
        checks.push(Check::new(
            format!("offset invariance n = {}", l.order),
            l.phase_spread <= s.phase_spread_limit,
            format!("{:.3e} rad", l.phase_spread),
            format!("<= {:e} rad", s.phase_spread_limit),
        ));
    }
    let m = (s.traces - s.rejected) as f64;
    let ratio = s.suppression * m;
    checks.push(Check::new(
        "uncorrected suppression × M",
        ratio >= 1.0 / s.suppression_factor && ratio <= s.suppression_factor,
        format!("{ratio:.3}"),
        format!("1 within ×{}", s.suppression_factor),
    ));
    checks.push(Check::new(
        "traces accepted",
        s.rejected < s.traces,
        format!("{} of {}", s.traces - s.rejected, s.traces),
        "at least one",
    ));
    checks
}
