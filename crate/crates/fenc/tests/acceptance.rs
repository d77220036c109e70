//! Acceptance criteria 1 to 9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fenc::bench::{self, BenchOptions};
use fenc::config::ExperimentConfig;
use fenc::fft::RealFft;
use fenc::manifest::RunManifest;
use fenc::runner;
use fenc_core::lindblad::{evolve, Population};
use fenc_core::nvmodel::{self, DrivePoint, OdmrParams};
use fenc_core::photonsim::{simulate_stream, DetectorModel, PowerCalibration, RateFunction, TransducedRate};
use fenc_core::signals::{Component, Signal, SignalSpec, ToneSpec};
use fenc_core::spectral::{self, psd_of_samples, NoiseBand, Window};
use rand::{Rng, SeedableRng};
use serde_json::Value;

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            passed,
            detail: detail.into(),
        }
    }
}

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
    summary: Value,
    seconds: f64,
}

impl Run {
    fn failed_checks(&self) -> Vec<String> {
        self.manifest
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} (measured {}, expected {})", c.name, c.measured, c.expected))
            .collect()
    }

    fn check(&self, name: &str) -> Option<bool> {
        self.manifest.checks.iter().find(|c| c.name == name).map(|c| c.passed)
    }
}

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    runner::load_config(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run(cfg: &ExperimentConfig, root: &Path) -> Run {
    let start = Instant::now();
    let outcome = runner::run(cfg, root).unwrap_or_else(|e| panic!("{}: {e}", cfg.kind.name()));
    let seconds = start.elapsed().as_secs_f64();
    let summary = serde_json::from_slice(&std::fs::read(outcome.dir.join("summary.json")).unwrap()).unwrap();
    Run {
        dir: outcome.dir,
        manifest: outcome.manifest,
        summary,
        seconds,
    }
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn list(v: &[f64], unit: f64, digits: usize) -> String {
    v.iter().map(|x| format!("{:.*}", digits, x / unit)).collect::<Vec<_>>().join(", ")
}

// 1 -------------------------------------------------------------------------

fn sensitivity_table() -> Verdict {
    // tabulated values, microtesla per root hertz
    let published = [8.5, 8.5, 13.3];
    let rows = nvmodel::reference_samples();
    let got: Vec<f64> = rows.iter().map(|r| nvmodel::sensitivity(&r.params) * 1e6).collect();
    let ok = got.iter().zip(published).all(|(g, p)| ((g - p) / p).abs() <= 0.02);
    Verdict::new(ok, format!("[{}] uT/sqrt(Hz) vs [8.5, 8.5, 13.3] within 2%", list(&got, 1.0, 3)))
}

// 2 -------------------------------------------------------------------------

fn shot_noise_scaling(root: &Path) -> Verdict {
    let cfg = config("snr-scaling.toml");
    let r = run(&cfg, root);
    let s = &r.summary;
    let times: Vec<f64> = s["times"].as_array().unwrap().iter().map(f).collect();
    let decade = times.last().unwrap() / times[0] >= 10.0;
    let simulated = *times.last().unwrap() <= 300.0;
    let b = f(&s["exponent"]);
    let b_ok = (b - 0.5).abs() <= 0.05;
    let ratio = f(&s["eta_empirical"]) / f(&s["eta_ideal"]);
    let ratio_ok = (1.0 / 1.5..=1.5).contains(&ratio);
    let wall_ok = r.seconds < 60.0;
    Verdict::new(
        decade && simulated && b_ok && ratio_ok && wall_ok,
        format!(
            "b = {b:.3} +/- {:.3} (want 0.5 +/- 0.05) over {:.0}-{:.0} s; eta_emp/eta = {ratio:.3} (want within x1.5); wall {:.1} s",
            f(&s["exponent_sigma"]),
            times[0],
            times.last().unwrap(),
            r.seconds
        ),
    )
}

// 3 -------------------------------------------------------------------------

/// Amplitude of harmonic `n` of the normalized single-Lorentzian fluorescence
/// driven as `delta(t) = delta0 - g cos(wt)`, by direct quadrature.
fn lorentzian_harmonic(delta0: f64, g: f64, width: f64, n: u32) -> f64 {
    let m = 1 << 14;
    let (mut re, mut im) = (0.0, 0.0);
    for j in 0..m {
        let th = 2.0 * PI * j as f64 / m as f64;
        let u = 2.0 * (delta0 - g * th.cos()) / width;
        let l = 1.0 / (1.0 + u * u);
        re += l * (n as f64 * th).cos();
        im += l * (n as f64 * th).sin();
    }
    2.0 * (re * re + im * im).sqrt() / m as f64
}

/// Second-to-first harmonic ratio of the noise-free transduced rate.
fn pipeline_harmonic_ratio(params: &OdmrParams, amplitude: f64) -> f64 {
    let signal = Signal::new(SignalSpec::new(vec![Component::Tone(ToneSpec::new(1e3, amplitude, 0.0).unwrap())], 0.0))
        .unwrap();
    let rate = TransducedRate::new(*params, DrivePoint::at_sensing_point(params), &signal);
    let (n, dt) = (4000, 2.5e-6);
    let x = (0..n).map(|j| rate.rate(j as f64 * dt).unwrap());
    let s = psd_of_samples(x, n, dt, Window::None, &mut RealFft::new()).unwrap();
    let k = s.bin_of(1e3);
    (s.psd[2 * k] / s.psd[k]).sqrt()
}

fn linearity_bound() -> Verdict {
    let p = nvmodel::nv32();
    let bound = nvmodel::linearity_bound(&p);
    let bound_ok = (bound - 495e-6).abs() / 495e-6 < 0.01;

    let delta0 = DrivePoint::at_sensing_point(&p).mw_freq - p.center_freq;
    let oracle = |scale: f64| {
        let g = p.gyromagnetic_ratio * scale * bound;
        lorentzian_harmonic(delta0, g, p.linewidth, 2) / lorentzian_harmonic(delta0, g, p.linewidth, 1)
    };
    let (strong, weak) = (oracle(0.3), oracle(0.01));
    let (strong_sim, weak_sim) = (pipeline_harmonic_ratio(&p, 0.3 * bound), pipeline_harmonic_ratio(&p, 0.01 * bound));
    let agree = |a: f64, b: f64| (a - b).abs() <= 1e-3 * b + 1e-9;

    // visible above shot noise in a 10 s photon stream
    let signal = Signal::new(SignalSpec::new(
        vec![Component::Tone(ToneSpec::new(1e3, 0.3 * bound, 0.0).unwrap())],
        0.0,
    ))
    .unwrap();
    let rate = TransducedRate::new(p, DrivePoint::at_sensing_point(&p), &signal);
    let stream = simulate_stream(&rate, 10.0, &DetectorModel::ideal(), 3).unwrap();
    let spec = spectral::psd(&spectral::bin(&stream, 1e-4).unwrap(), Window::None, &mut RealFft::new()).unwrap();
    let band = NoiseBand::new(100.0, 4900.0).excluding(&[1e3, 2e3, 3e3, 4e3]);
    let mu = spectral::mean_from_median(spectral::noise_floor(&spec, &band).unwrap());
    let visible = spec.psd[spec.bin_of(2e3)] / mu;

    let ok = bound_ok
        && agree(strong_sim, strong)
        && agree(weak_sim, weak)
        && strong > 0.01
        && visible > 20.0
        && weak < 5e-4
        && weak_sim < 5e-4;
    Verdict::new(
        ok,
        format!(
            "bound {:.1} uT; 2f/f at 0.3x = {strong_sim:.4} (oracle {strong:.4}, {visible:.0}x shot floor), at 0.01x = {weak_sim:.2e} (oracle {weak:.2e}, limit 5e-4)",
            bound * 1e6
        ),
    )
}

// 4 -------------------------------------------------------------------------

fn bandwidth_fit(root: &Path) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["bandwidth-sweep.toml", "bandwidth-power.toml"] {
        let r = run(&config(name), root);
        let entries = r.summary["entries"].as_array().unwrap();
        for e in entries {
            let (fc, fit, b) = (f(&e["cutoff"]), f(&e["fitted_cutoff"]), f(&e["exponent"]));
            ok &= ((fit - fc) / fc).abs() <= 0.05 && (b - 1.0).abs() <= 0.1 && e["converged"] == true;
            parts.push(format!("{:.0}k->{:.1}k b={b:.3}", fc / 1e3, fit / 1e3));
        }
        ok &= r.failed_checks().is_empty();
    }
    // calibration map is non-decreasing over its whole domain
    let cal = PowerCalibration::placeholder();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let mut powers: Vec<f64> = (0..2000).map(|_| rng.random_range(0.0..1e-3)).collect();
    powers.sort_by(f64::total_cmp);
    let map: Vec<f64> = powers.iter().map(|&p| cal.bandwidth_at(p).value).collect();
    let monotone = map.windows(2).all(|w| w[1] >= w[0]);
    ok &= monotone;
    Verdict::new(ok, format!("{}; calibration monotone: {monotone}", parts.join(", ")))
}

// 5 -------------------------------------------------------------------------

fn lindblad_sweep(root: &Path) -> Verdict {
    let r = run(&config("lindblad-sweep.toml"), root);
    let s = &r.summary;
    let fc: Vec<f64> = s["cutoffs"].as_array().unwrap().iter().map(f).collect();
    let b: Vec<f64> = s["exponents"].as_array().unwrap().iter().map(f).collect();

    let p = common::params(2.0 * PI * 4e4, 2.0 * PI * 5e4, 5e3, 1e4, 1.0);
    let t1 = 3e-4;
    let traj = evolve(&p, Population::Down, (0.0, t1), p.max_step() / 4.0).unwrap();
    let err = traj
        .times
        .iter()
        .zip(&traj.sz)
        .step_by(25)
        .map(|(&t, &sz)| (sz - common::oracle_sz(&p, t)).abs())
        .fold(0.0, f64::max);
    let ok = r.failed_checks().is_empty() && err < 1e-6;
    Verdict::new(
        ok,
        format!(
            "invariants ok; expm max error {err:.1e}; fc = [{}] kHz, b = [{}] at s = 0, 1, 3{}",
            list(&fc, 1e3, 2),
            list(&b, 1.0, 3),
            fmt_failures(&r)
        ),
    )
}

fn fmt_failures(r: &Run) -> String {
    let f = r.failed_checks();
    if f.is_empty() {
        String::new()
    } else {
        format!("; failed: {}", f.join("; "))
    }
}

// 6 -------------------------------------------------------------------------

fn multitone(root: &Path) -> Verdict {
    let r = run(&config("multitone.toml"), root);
    let s = &r.summary;
    let resolution = f(&s["resolution"]);
    let peaks = s["peaks"].as_array().unwrap();
    let at_bins = peaks.iter().all(|p| p["found_bin"] == p["expected_bin"]);
    let sig: Vec<f64> = peaks.iter().map(|p| f(&p["significance"])).collect();
    let ok = r.failed_checks().is_empty() && resolution == 1.0 && at_bins && peaks.len() == 3;
    Verdict::new(
        ok,
        format!(
            "3 peaks at expected bins: {at_bins}; significance [{}] sigma; resolution {resolution} Hz over {} segments{}",
            list(&sig, 1.0, 1),
            s["n_averages"],
            fmt_failures(&r)
        ),
    )
}

// 7 -------------------------------------------------------------------------

fn phase_coherent(root: &Path) -> Verdict {
    let r = run(&config("phase-coherent.toml"), root);
    let s = &r.summary;
    let m = s["traces"].as_f64().unwrap() - s["rejected"].as_f64().unwrap();
    let lines = s["lines"].as_array().unwrap();
    let worst_amp = lines
        .iter()
        .map(|l| (f(&l["amplitude"]) / (f(&s["scale"]) * f(&l["bessel"]).abs()) - 1.0).abs())
        .fold(0.0, f64::max);
    let supp = f(&s["suppression"]) * m;
    Verdict::new(
        r.failed_checks().is_empty(),
        format!(
            "{m} traces accepted; worst |J_n| deviation {:.2}%; uncorrected power x M = {supp:.3} (want 0.5-2){}",
            worst_amp * 100.0,
            fmt_failures(&r)
        ),
    )
}

// 8 -------------------------------------------------------------------------

fn telegraph(root: &Path) -> Verdict {
    let r = run(&config("telegraph.toml"), root);
    let res = r.summary["results"].as_array().unwrap();
    let parts: Vec<String> = res
        .iter()
        .map(|d| {
            format!(
                "T={:.2}ms photon {:.3} input {:.3}",
                f(&d["dwell"]) * 1e3,
                f(&d["photon_dwell"]) * 1e3,
                f(&d["input_dwell"]) * 1e3
            )
        })
        .collect();
    Verdict::new(r.failed_checks().is_empty(), format!("{}{}", parts.join("; "), fmt_failures(&r)))
}

// 9 -------------------------------------------------------------------------

fn infrastructure(root: &Path) -> Verdict {
    // Parseval on a random count record
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let n = 1 << 18;
    let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0u32..20))).collect();
    let s = psd_of_samples(x.iter().copied(), n, 1e-6, Window::None, &mut RealFft::new()).unwrap();
    let mean = x.iter().sum::<f64>() / n as f64;
    let time: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let freq: f64 = (0..s.len()).map(|k| s.fold_weight(k) * s.psd[k]).sum::<f64>() / n as f64;
    let parseval = ((freq - time) / time).abs();

    // two runs of a stochastic experiment into separate roots
    let mut cfg = config("bandwidth-sweep.toml");
    cfg.output_dir = "rerun".into();
    if let Some(b) = cfg.bandwidth_sweep.as_mut() {
        b.cutoffs = Some(vec![1e4]);
        b.duration = 0.01;
    }
    let (a, b) = (root.join("a"), root.join("b"));
    let (ra, rb) = (run(&cfg, &a), run(&cfg, &b));
    let identical = ra.manifest.files == rb.manifest.files
        && ra.manifest.files.iter().all(|e| {
            std::fs::read(ra.dir.join(&e.path)).unwrap() == std::fs::read(rb.dir.join(&e.path)).unwrap()
        });
    assert!(ra.check("fitted cutoff increases with configured cutoff").is_some());

    let report = bench::run(&BenchOptions::default()).unwrap();
    let ok = parseval < 1e-9 && identical && report.process_seconds < 60.0;
    Verdict::new(
        ok,
        format!(
            "Parseval rel. error {parseval:.1e}; reruns byte-identical: {identical} ({} files); bench {} tags at 100 ns bins processed in {:.1} s (simulation {:.1} s)",
            ra.manifest.files.len(),
            report.tags,
            report.process_seconds,
            report.simulate_seconds
        ),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("1 sensitivity table", Box::new(sensitivity_table)),
        ("2 shot-noise SNR scaling", Box::new(|| shot_noise_scaling(root))),
        ("3 linearity bound", Box::new(linearity_bound)),
        ("4 bandwidth fit", Box::new(|| bandwidth_fit(root))),
        ("5 Lindblad sweep", Box::new(|| lindblad_sweep(root))),
        ("6 multitone", Box::new(|| multitone(root))),
        ("7 phase-coherent averaging", Box::new(|| phase_coherent(root))),
        ("8 telegraph dwell times", Box::new(|| telegraph(root))),
        ("9 infrastructure", Box::new(|| infrastructure(root))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let v = check();
        if !v.passed {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1} s]",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
