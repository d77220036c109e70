//! Two-level master equation in the microwave rotating frame.
//!
//! Basis `(|up>, |down>)`, `sigma_z = diag(1, -1)`, `sigma_- = |down><up|`,
//! `S = sigma / 2`.
//!
//! ```text
//! d rho / dt = -i [H, rho] + sum_j (2 L_j rho L_j^+ - L_j^+ L_j rho - rho L_j^+ L_j)
//! H   = (Delta - gamma_e b(t)) S_z - Omega S_x
//! L_1 = sqrt(Gamma_1 / 2) sigma_-      L_2 = sqrt(Gamma_2 / 2) sigma_z
//! ```
//!
//! With the factor 2 on `L rho L^+`, populations relax at `Gamma_1` and
//! coherences at `Gamma_1 / 2 + 2 Gamma_2`. Only the `S_z` part of the signal
//! is kept, so the signal Hamiltonian is diagonal.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use num_complex::Complex64;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::fitkit::{self, FitResult, Model};
use crate::nvmodel::NV_GYROMAGNETIC_RATIO;
use crate::signals::ToneSpec;
use crate::{Error, Result};

pub const TRACE_TOL: f64 = 1e-9;
pub const HERMITICITY_TOL: f64 = 1e-12;
pub const POSITIVITY_TOL: f64 = 1e-9;
/// Relative period-to-period change accepted as steady.
pub const SETTLE_TOL: f64 = 1e-3;
const MIN_STEPS_PER_PERIOD: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LindbladParams {
    /// Microwave detuning, rad/s.
    pub detuning: f64,
    /// Rabi rate `gamma_e B1`, rad/s.
    pub rabi: f64,
    /// Unsaturated spin-lattice rate, 1/s.
    pub gamma1: f64,
    /// Unsaturated dephasing rate, 1/s.
    pub gamma2: f64,
    /// Saturation parameter `s`.
    #[serde(default)]
    pub saturation: f64,
    /// Dephasing growth per unit `s` relative to `gamma1`'s.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Hz/T; multiplied by `2 pi` in the Hamiltonian.
    #[serde(default = "default_gamma_e")]
    pub gyromagnetic_ratio: f64,
    pub signal: ToneSpec,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_gamma_e() -> f64 {
    NV_GYROMAGNETIC_RATIO
}

impl LindbladParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("detuning", self.detuning),
            ("rabi", self.rabi),
            ("gyromagnetic_ratio", self.gyromagnetic_ratio),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        for (name, v) in [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("saturation", self.saturation),
            ("alpha", self.alpha),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        self.signal.validate()
    }

    /// `Gamma_1 (1 + s)`.
    pub fn effective_gamma1(&self) -> f64 {
        self.gamma1 * (1.0 + self.saturation)
    }

    /// `Gamma_2 (1 + alpha s)`.
    pub fn effective_gamma2(&self) -> f64 {
        self.gamma2 * (1.0 + self.alpha * self.saturation)
    }

    pub fn with_saturation(mut self, s: f64) -> Self {
        self.saturation = s;
        self
    }

    pub fn with_signal(mut self, signal: ToneSpec) -> Self {
        self.signal = signal;
        self
    }

    /// Signal-induced detuning `gamma_e b(t)`, rad/s.
    pub fn signal_shift(&self, t: f64) -> f64 {
        TAU * self.gyromagnetic_ratio * self.signal.value(t)
    }

    /// Fastest rate the integrator must resolve, 1/s.
    pub fn fastest_rate(&self) -> f64 {
        [
            self.detuning.abs(),
            self.rabi.abs(),
            self.effective_gamma1(),
            self.effective_gamma2(),
            TAU * self.signal.frequency,
            TAU * self.gyromagnetic_ratio * self.signal.amplitude,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Largest step allowed, `0.1 / fastest_rate` (unbounded when static).
    pub fn max_step(&self) -> f64 {
        let r = self.fastest_rate();
        if r > 0.0 {
            0.1 / r
        } else {
            f64::INFINITY
        }
    }

    /// Slowest nonzero relaxation rate, 1/s.
    pub fn slowest_relaxation(&self) -> Option<f64> {
        let g1 = self.effective_gamma1();
        let g2 = self.effective_gamma2();
        [g1, g1 + g2, 0.5 * g1 + 2.0 * g2]
            .into_iter()
            .filter(|&r| r > 0.0)
            .reduce(f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Population {
    Up,
    Down,
}

/// 2x2 density matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(pub [[Complex64; 2]; 2]);

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

impl DensityMatrix {
    pub fn pure(state: Population) -> Self {
        match state {
            Population::Up => DensityMatrix([[ONE, ZERO], [ZERO, ZERO]]),
            Population::Down => DensityMatrix([[ZERO, ZERO], [ZERO, ONE]]),
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    /// `<S_z> = (rho_uu - rho_dd) / 2`.
    pub fn sz(&self) -> f64 {
        0.5 * (self.0[0][0].re - self.0[1][1].re)
    }

    pub fn hermiticity_error(&self) -> f64 {
        let m = &self.0;
        [m[0][0].im.abs(), m[1][1].im.abs(), (m[0][1] - m[1][0].conj()).norm()]
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Smaller eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = &self.0;
        let (a, d) = (m[0][0].re, m[1][1].re);
        let b = 0.5 * (m[0][1] + m[1][0].conj());
        let disc = ((a - d).powi(2) + 4.0 * b.norm_sqr()).sqrt();
        0.5 * (a + d - disc)
    }

    fn axpy(&self, k: f64, other: &DensityMatrix) -> DensityMatrix {
        let mut out = *self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] += other.0[i][j] * k;
            }
        }
        out
    }
}

/// Right-hand side of the master equation at signal-shifted detuning
/// `delta` with Rabi rate `omega`, relaxation rates `g1`, `g2`.
fn rhs(rho: &DensityMatrix, delta: f64, omega: f64, g1: f64, g2: f64) -> DensityMatrix {
    let r = &rho.0;
    let i = Complex64::new(0.0, 1.0);
    // H = [[delta/2, -omega/2], [-omega/2, -delta/2]]
    let h = [
        [Complex64::new(0.5 * delta, 0.0), Complex64::new(-0.5 * omega, 0.0)],
        [Complex64::new(-0.5 * omega, 0.0), Complex64::new(-0.5 * delta, 0.0)],
    ];
    let mut out = [[ZERO; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut comm = ZERO;
            for k in 0..2 {
                comm += h[a][k] * r[k][b] - r[a][k] * h[k][b];
            }
            out[a][b] = -i * comm;
        }
    }
    // L1 = sqrt(g1/2) sigma_-: 2 L rho L^+ = g1 rho_uu |d><d|,
    // L^+ L = (g1/2) |u><u|
    out[1][1] += g1 * r[0][0];
    out[0][0] -= g1 * r[0][0];
    out[0][1] -= 0.5 * g1 * r[0][1];
    out[1][0] -= 0.5 * g1 * r[1][0];
    // L2 = sqrt(g2/2) sigma_z: g2 (sigma_z rho sigma_z - rho)
    out[0][1] -= 2.0 * g2 * r[0][1];
    out[1][0] -= 2.0 * g2 * r[1][0];
    DensityMatrix(out)
}

/// Physicality diagnostics gathered along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// seconds
    pub times: Vec<f64>,
    pub sz: Vec<f64>,
    pub final_state: DensityMatrix,
    pub diagnostics: Diagnostics,
}

struct Integrator<'a> {
    params: &'a LindbladParams,
    g1: f64,
    g2: f64,
    diag: Diagnostics,
}

impl<'a> Integrator<'a> {
    fn new(params: &'a LindbladParams) -> Self {
        Integrator {
            params,
            g1: params.effective_gamma1(),
            g2: params.effective_gamma2(),
            diag: Diagnostics {
                min_eigenvalue: f64::INFINITY,
                ..Diagnostics::default()
            },
        }
    }

    fn f(&self, rho: &DensityMatrix, t: f64) -> DensityMatrix {
        let p = self.params;
        rhs(rho, p.detuning - p.signal_shift(t), p.rabi, self.g1, self.g2)
    }

    fn step(&mut self, rho: &DensityMatrix, t: f64, h: f64) -> Result<DensityMatrix> {
        let k1 = self.f(rho, t);
        let k2 = self.f(&rho.axpy(0.5 * h, &k1), t + 0.5 * h);
        let k3 = self.f(&rho.axpy(0.5 * h, &k2), t + 0.5 * h);
        let k4 = self.f(&rho.axpy(h, &k3), t + h);
        let next = rho
            .axpy(h / 6.0, &k1)
            .axpy(h / 3.0, &k2)
            .axpy(h / 3.0, &k3)
            .axpy(h / 6.0, &k4);
        self.check(&next, t + h)?;
        Ok(next)
    }

    fn check(&mut self, rho: &DensityMatrix, t: f64) -> Result<()> {
        let tr = (rho.trace() - ONE).norm();
        let herm = rho.hermiticity_error();
        let ev = rho.min_eigenvalue();
        self.diag.max_trace_error = self.diag.max_trace_error.max(tr);
        self.diag.max_hermiticity_error = self.diag.max_hermiticity_error.max(herm);
        self.diag.min_eigenvalue = self.diag.min_eigenvalue.min(ev);
        if !(tr <= TRACE_TOL && herm <= HERMITICITY_TOL && ev >= -POSITIVITY_TOL) {
            return Err(Error::Unphysical {
                t,
                trace: rho.trace().re,
                min_eigenvalue: ev,
                hermiticity: herm,
            });
        }
        Ok(())
    }

    /// Advances `n` equal steps of `h`, calling `visit` after each.
    fn run(
        &mut self,
        rho: &mut DensityMatrix,
        t0: f64,
        h: f64,
        n: usize,
        mut visit: impl FnMut(f64, &DensityMatrix),
    ) -> Result<()> {
        for k in 0..n {
            let t = t0 + k as f64 * h;
            *rho = self.step(rho, t, h)?;
            visit(t0 + (k + 1) as f64 * h, rho);
        }
        Ok(())
    }
}

fn check_step(params: &LindbladParams, dt: f64) -> Result<()> {
    let max = params.max_step();
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if dt > max {
        return Err(Error::StepTooLarge { dt, max });
    }
    Ok(())
}

/// Integrates from a pure population state over `[t0, t1]` with steps no
/// longer than `dt`, recording `<S_z>` at every step.
pub fn evolve(params: &LindbladParams, initial: Population, t_span: (f64, f64), dt: f64) -> Result<Trajectory> {
    evolve_from(params, DensityMatrix::pure(initial), t_span, dt)
}

/// [`evolve`] from an arbitrary density matrix.
pub fn evolve_from(params: &LindbladParams, initial: DensityMatrix, t_span: (f64, f64), dt: f64) -> Result<Trajectory> {
    params.validate()?;
    check_step(params, dt)?;
    let (t0, t1) = t_span;
    if !(t1 >= t0 && t0.is_finite() && t1.is_finite()) {
        return Err(Error::invalid("t_span", "must be finite with t1 >= t0"));
    }
    let n = ((t1 - t0) / dt).ceil() as usize;
    let h = if n > 0 { (t1 - t0) / n as f64 } else { 0.0 };
    let mut integ = Integrator::new(params);
    let mut rho = initial;
    integ.check(&rho, t0)?;
    let mut times = Vec::with_capacity(n + 1);
    let mut sz = Vec::with_capacity(n + 1);
    times.push(t0);
    sz.push(rho.sz());
    integ.run(&mut rho, t0, h, n, |t, r| {
        times.push(t);
        sz.push(r.sz());
    })?;
    Ok(Trajectory {
        times,
        sz,
        final_state: rho,
        diagnostics: integ.diag,
    })
}

/// Closed-form static steady state `<S_z>` at total detuning `delta`
/// (rad/s):
/// `-(1/2) G1 / (G1 + Omega^2 g / (g^2 + delta^2))`, `g = G1/2 + 2 G2`.
pub fn steady_state_sz(params: &LindbladParams, delta: f64) -> f64 {
    let g1 = params.effective_gamma1();
    let g = 0.5 * g1 + 2.0 * params.effective_gamma2();
    let drive = if g > 0.0 {
        params.rabi * params.rabi * g / (g * g + delta * delta)
    } else {
        0.0
    };
    if g1 + drive == 0.0 {
        return f64::NAN;
    }
    -0.5 * g1 / (g1 + drive)
}

/// Detuning (rad/s, positive side) where the static response is steepest.
pub fn steepest_detuning(params: &LindbladParams) -> f64 {
    let g1 = params.effective_gamma1();
    let g = 0.5 * g1 + 2.0 * params.effective_gamma2();
    // Lorentzian in delta with squared half-width g^2 + Omega^2 g / G1
    let w2 = g * g + if g1 > 0.0 { params.rabi * params.rabi * g / g1 } else { 0.0 };
    (w2 / 3.0).sqrt()
}

/// Options for [`response_amplitude`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResponseOptions {
    /// Upper bound on simulated time, seconds. Defaults to the transient
    /// window times 40 plus 200 signal periods.
    pub max_duration: Option<f64>,
}

/// Peak-to-peak `<S_z>` over one signal period once successive periods
/// agree to [`SETTLE_TOL`].
///
/// The transient window is `5 / (slowest relaxation rate)`, rounded up to a
/// whole number of signal periods.
pub fn response_amplitude(params: &LindbladParams, options: &ResponseOptions) -> Result<f64> {
    params.validate()?;
    let slowest = params
        .slowest_relaxation()
        .ok_or_else(|| Error::NoSteadyState { duration: 0.0 })?;
    let transient = 5.0 / slowest;
    let f = params.signal.frequency;
    if params.signal.amplitude == 0.0 {
        return Ok(0.0);
    }
    if !(f > 0.0) {
        return Err(Error::invalid("signal.frequency", "must be positive for a periodic response"));
    }
    let period = 1.0 / f;
    let steps = ((period / params.max_step()).ceil() as usize).max(MIN_STEPS_PER_PERIOD);
    let h = period / steps as f64;
    let max_duration = options.max_duration.unwrap_or(40.0 * transient + 200.0 * period);

    let mut integ = Integrator::new(params);
    let mut rho = DensityMatrix::pure(Population::Down);
    let warm_periods = (transient / period).ceil() as usize;
    let mut t = 0.0;
    integ.run(&mut rho, t, h, warm_periods * steps, |_, _| {})?;
    t += warm_periods as f64 * period;

    let mut previous: Option<f64> = None;
    loop {
        let (mut lo, mut hi) = (rho.sz(), rho.sz());
        integ.run(&mut rho, t, h, steps, |_, r| {
            let v = r.sz();
            lo = lo.min(v);
            hi = hi.max(v);
        })?;
        t += period;
        let pp = hi - lo;
        if let Some(prev) = previous {
            if (pp - prev).abs() <= SETTLE_TOL * pp.abs().max(1e-300) {
                return Ok(pp);
            }
        }
        previous = Some(pp);
        if t > max_duration {
            return Err(Error::NoSteadyState { duration: t });
        }
    }
}

/// One curve of peak-to-peak response against signal frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurve {
    pub saturation: f64,
    /// Hz
    pub frequencies: Vec<f64>,
    /// Peak-to-peak `<S_z>`.
    pub amplitudes: Vec<f64>,
    /// Constant noise-floor offset.
    pub offset: f64,
}

impl ResponseCurve {
    /// Response power with the floor added: `amplitude^2 + offset`.
    pub fn power(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a * a + self.offset).collect()
    }

    /// Roll-off fit of [`ResponseCurve::power`].
    pub fn fit_bandwidth(&self) -> Result<FitResult> {
        fitkit::fit(&Model::Bandwidth, &self.frequencies, &self.power(), None, None)
    }
}

/// Response curves over `frequencies` for each saturation in `saturations`.
pub fn sweep_response(
    base: &LindbladParams,
    saturations: &[f64],
    frequencies: &[f64],
    offset: f64,
    options: &ResponseOptions,
) -> Result<Vec<ResponseCurve>> {
    if frequencies.windows(2).any(|w| !(w[1] > w[0])) || frequencies.first().map_or(true, |&f| f <= 0.0) {
        return Err(Error::invalid("frequencies", "must be positive and strictly increasing"));
    }
    if !(offset >= 0.0) {
        return Err(Error::invalid("offset", "must be >= 0"));
    }
    saturations
        .iter()
        .map(|&s| {
            let amplitudes = frequencies
                .iter()
                .map(|&f| {
                    let mut p = base.with_saturation(s);
                    p.signal.frequency = f;
                    response_amplitude(&p, options)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(ResponseCurve {
                saturation: s,
                frequencies: frequencies.to_vec(),
                amplitudes,
                offset,
            })
        })
        .collect()
}

/// Log-spaced grid of `n` points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return alloc::vec![lo];
    }
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(detuning: f64, rabi: f64, g1: f64, g2: f64, tone: ToneSpec) -> LindbladParams {
        LindbladParams {
            detuning,
            rabi,
            gamma1: g1,
            gamma2: g2,
            saturation: 0.0,
            alpha: 1.0,
            gyromagnetic_ratio: NV_GYROMAGNETIC_RATIO,
            signal: tone,
        }
    }

    fn silent() -> ToneSpec {
        ToneSpec::new(0.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn identity_without_rates() {
        let p = params(0.0, 0.0, 0.0, 0.0, silent());
        let tr = evolve(&p, Population::Up, (0.0, 1.0), 0.01).unwrap();
        assert!(tr.sz.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn population_decay_at_gamma1() {
        let g1 = 1e3;
        let p = params(0.0, 0.0, g1, 0.0, silent());
        let tr = evolve(&p, Population::Up, (0.0, 10.0 / g1), 1e-5).unwrap();
        for (&t, &s) in tr.times.iter().zip(&tr.sz) {
            let want = (-g1 * t).exp() - 0.5;
            assert!((s - want).abs() < 1e-9, "t {t}: {s} vs {want}");
        }
    }

    #[test]
    fn rabi_oscillation_conserved() {
        let omega = 2e4;
        let p = params(0.0, omega, 0.0, 0.0, silent());
        let tr = evolve(&p, Population::Up, (0.0, 20.0 * TAU / omega), 0.01 / omega).unwrap();
        for (&t, &s) in tr.times.iter().zip(&tr.sz) {
            assert!((s - 0.5 * (omega * t).cos()).abs() < 1e-7, "t {t}");
        }
        let last_cycle = &tr.sz[tr.sz.len() - 700..];
        let peak = last_cycle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-6);
    }

    #[test]
    fn coherence_decay_rate_matches_convention() {
        // start on the equator: rho = |+><+|
        let plus = DensityMatrix([[Complex64::new(0.5, 0.0); 2]; 2]);
        let (g1, g2) = (300.0, 700.0);
        let p = params(0.0, 0.0, g1, g2, silent());
        let tr = evolve_from(&p, plus, (0.0, 2e-3), 1e-6).unwrap();
        let c = tr.final_state.0[0][1].re;
        let want = 0.5 * (-(0.5 * g1 + 2.0 * g2) * 2e-3).exp();
        assert!((c - want).abs() < 1e-10);
    }

    #[test]
    fn step_rule_enforced_before_integration() {
        let p = params(1e5, 0.0, 0.0, 0.0, silent());
        let err = evolve(&p, Population::Up, (0.0, 1.0), 2e-6).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
        assert!(evolve(&p, Population::Up, (0.0, 1e-3), 1e-6).is_ok());
    }

    #[test]
    fn static_limit_matches_closed_form() {
        let p = params(3e4, 2e4, 1e4, 5e3, silent());
        let tr = evolve(&p, Population::Down, (0.0, 3e-3), p.max_step()).unwrap();
        let last = *tr.sz.last().unwrap();
        assert!((last - steady_state_sz(&p, 3e4)).abs() < 1e-9);
        let d = tr.diagnostics;
        assert!(d.max_trace_error < TRACE_TOL && d.max_hermiticity_error < HERMITICITY_TOL);
        assert!(d.min_eigenvalue > -POSITIVITY_TOL);
    }

    #[test]
    fn steepest_detuning_is_steepest() {
        let p = params(0.0, 2e4, 1e4, 5e3, silent());
        let d0 = steepest_detuning(&p);
        let slope = |d: f64| (steady_state_sz(&p, d + 1.0) - steady_state_sz(&p, d - 1.0)) / 2.0;
        assert!(slope(d0).abs() > slope(0.9 * d0).abs());
        assert!(slope(d0).abs() > slope(1.1 * d0).abs());
    }

    fn slow_tone(b: f64) -> ToneSpec {
        ToneSpec::new(10.0, b, 0.0).unwrap()
    }

    #[test]
    fn adiabatic_limit() {
        let base = params(0.0, 2e4, 1e4, 5e3, slow_tone(0.0));
        let d0 = steepest_detuning(&base);
        let b = 2e-9;
        let p = LindbladParams { detuning: d0, ..base }.with_signal(slow_tone(b));
        let shift = TAU * NV_GYROMAGNETIC_RATIO * b;
        let want = (steady_state_sz(&p, d0 + shift) - steady_state_sz(&p, d0 - shift)).abs();
        let got = response_amplitude(&p, &ResponseOptions::default()).unwrap();
        assert!((got / want - 1.0).abs() < 0.02, "{got} vs {want}");
    }

    #[test]
    fn zero_amplitude_zero_response() {
        let p = params(1e4, 2e4, 1e4, 5e3, slow_tone(0.0));
        assert_eq!(response_amplitude(&p, &ResponseOptions::default()).unwrap(), 0.0);
        let curves = sweep_response(&p, &[0.0], &[10.0, 100.0], 0.25, &ResponseOptions::default()).unwrap();
        assert!(curves[0].power().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn no_relaxation_has_no_steady_state() {
        let p = params(1e4, 2e4, 0.0, 0.0, slow_tone(1e-9));
        assert!(matches!(
            response_amplitude(&p, &ResponseOptions::default()),
            Err(Error::NoSteadyState { .. })
        ));
    }

    #[test]
    fn saturation_map() {
        let p = LindbladParams {
            saturation: 2.0,
            alpha: 0.5,
            ..params(0.0, 0.0, 100.0, 10.0, silent())
        };
        assert_eq!(p.effective_gamma1(), 300.0);
        assert_eq!(p.effective_gamma2(), 20.0);
    }

    #[test]
    fn signal_hamiltonian_is_diagonal() {
        // the signal enters only through delta; the off-diagonal of H is -omega/2
        let rho = DensityMatrix([[Complex64::new(0.3, 0.0), Complex64::new(0.1, 0.2)],
                                 [Complex64::new(0.1, -0.2), Complex64::new(0.7, 0.0)]]);
        let a = rhs(&rho, 1.0, 0.0, 0.0, 0.0);
        // with no drive, populations are untouched by any detuning
        assert_eq!(a.0[0][0], ZERO);
        assert_eq!(a.0[1][1], ZERO);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn invariants_hold(det in -3e4f64..3e4, rabi in 0.0f64..3e4, g1 in 0.0f64..2e4, g2 in 0.0f64..2e4,
                           b in 0.0f64..5e-8, f in 1.0f64..2e3, up in any::<bool>()) {
            let p = params(det, rabi, g1, g2, ToneSpec::new(f, b, 0.0).unwrap());
            let init = if up { Population::Up } else { Population::Down };
            let tr = evolve(&p, init, (0.0, 1e-3), p.max_step()).unwrap();
            prop_assert!(tr.diagnostics.max_trace_error <= TRACE_TOL);
            prop_assert!(tr.diagnostics.max_hermiticity_error <= HERMITICITY_TOL);
            prop_assert!(tr.diagnostics.min_eigenvalue >= -POSITIVITY_TOL);
        }

        #[test]
        fn small_signal_response_is_linear(scale in 1.0f64..10.0) {
            let base = params(0.0, 2e4, 1e4, 5e3, slow_tone(0.0));
            let d0 = steepest_detuning(&base);
            let at = |b: f64| {
                let p = LindbladParams { detuning: d0, ..base }.with_signal(ToneSpec::new(300.0, b, 0.0).unwrap());
                response_amplitude(&p, &ResponseOptions::default()).unwrap()
            };
            let r1 = at(1e-10) / 1e-10;
            let r2 = at(1e-10 * scale) / (1e-10 * scale);
            prop_assert!((r2 / r1 - 1.0).abs() < 0.02);
        }
    }
}
