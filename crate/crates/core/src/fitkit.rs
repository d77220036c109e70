//! Weighted nonlinear least squares for the model curves used in the
//! analysis chain.
//!
//! Minimisation is Levenberg-Marquardt with Marquardt diagonal scaling.
//! Strictly positive parameters are optimised as logarithms, so they can
//! never leave their domain; the reported estimates and uncertainties are in
//! the natural parameters.
//!
//! | model | parameters |
//! |---|---|
//! | `lorentzian` | `f0, linewidth, contrast, baseline` |
//! | `hyperfine-triplet` | same, three equal lines `splitting` apart |
//! | `bandwidth` | `A, fc, b, c`: `A / (1 + (f/fc)^2)^b + c` |
//! | `telegraph` | `A, T`: `A^2 T / (2 (1 + (pi f T)^2))` |
//! | `powerlaw` | `A, b`: `A x^b` |

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::nvmodel::N14_HYPERFINE_SPLITTING;
use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 500;
const REL_COST_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;
const SINGULAR_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Model {
    Lorentzian,
    HyperfineTriplet {
        /// Hz
        #[serde(default = "default_splitting")]
        splitting: f64,
    },
    Bandwidth,
    Telegraph,
    PowerLaw,
}

fn default_splitting() -> f64 {
    N14_HYPERFINE_SPLITTING
}

impl Model {
    pub fn triplet() -> Self {
        Model::HyperfineTriplet {
            splitting: N14_HYPERFINE_SPLITTING,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Lorentzian => "lorentzian",
            Model::HyperfineTriplet { .. } => "hyperfine-triplet",
            Model::Bandwidth => "bandwidth",
            Model::Telegraph => "telegraph",
            Model::PowerLaw => "powerlaw",
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Model::Lorentzian | Model::HyperfineTriplet { .. } => &["f0", "linewidth", "contrast", "baseline"],
            Model::Bandwidth => &["A", "fc", "b", "c"],
            Model::Telegraph => &["A", "T"],
            Model::PowerLaw => &["A", "b"],
        }
    }

    pub fn n_params(&self) -> usize {
        self.param_names().len()
    }

    /// Parameters optimised in log space.
    fn positive(&self) -> &'static [bool] {
        match self {
            Model::Lorentzian | Model::HyperfineTriplet { .. } => &[false, true, true, true],
            Model::Bandwidth => &[true, true, true, false],
            Model::Telegraph => &[true, true],
            Model::PowerLaw => &[true, false],
        }
    }

    /// PSD-like models default to relative weights.
    fn relative_weights(&self) -> bool {
        matches!(self, Model::Bandwidth | Model::Telegraph | Model::PowerLaw)
    }

    fn offsets(&self) -> &'static [f64] {
        match self {
            Model::HyperfineTriplet { .. } => &[-1.0, 0.0, 1.0],
            _ => &[0.0],
        }
    }

    pub fn eval(&self, p: &[f64], x: f64) -> f64 {
        match self {
            Model::Lorentzian | Model::HyperfineTriplet { .. } => {
                let split = self.splitting();
                let offs = self.offsets();
                let h: f64 = offs
                    .iter()
                    .map(|&j| {
                        let u = 2.0 * (x - p[0] - j * split) / p[1];
                        1.0 / (1.0 + u * u)
                    })
                    .sum::<f64>()
                    / offs.len() as f64;
                p[3] * (1.0 - p[2] * h)
            }
            Model::Bandwidth => {
                let q = 1.0 + (x / p[1]).powi(2);
                p[0] * q.powf(-p[2]) + p[3]
            }
            Model::Telegraph => telegraph_psd(&TelegraphModel { amplitude: p[0], dwell: p[1] }, x),
            Model::PowerLaw => p[0] * x.powf(p[1]),
        }
    }

    /// Analytic gradient with respect to the natural parameters.
    pub fn gradient(&self, p: &[f64], x: f64, g: &mut [f64]) {
        match self {
            Model::Lorentzian | Model::HyperfineTriplet { .. } => {
                let split = self.splitting();
                let offs = self.offsets();
                let w = 1.0 / offs.len() as f64;
                let (f0, gam, c, base) = (p[0], p[1], p[2], p[3]);
                let (mut h, mut dh0, mut dhg) = (0.0, 0.0, 0.0);
                for &j in offs {
                    let u = 2.0 * (x - f0 - j * split) / gam;
                    let hj = 1.0 / (1.0 + u * u);
                    h += w * hj;
                    dh0 += w * 4.0 * u * hj * hj / gam;
                    dhg += w * 2.0 * u * u * hj * hj / gam;
                }
                g[0] = -base * c * dh0;
                g[1] = -base * c * dhg;
                g[2] = -base * h;
                g[3] = 1.0 - c * h;
            }
            Model::Bandwidth => {
                let (a, fc, b) = (p[0], p[1], p[2]);
                let q = 1.0 + (x / fc).powi(2);
                let qb = q.powf(-b);
                g[0] = qb;
                g[1] = a * b * qb / q * 2.0 * x * x / (fc * fc * fc);
                g[2] = -a * qb * q.ln();
                g[3] = 1.0;
            }
            Model::Telegraph => {
                let (a, t) = (p[0], p[1]);
                let z = (PI * x * t).powi(2);
                let d = 1.0 + z;
                g[0] = a * t / d;
                g[1] = 0.5 * a * a * (1.0 - z) / (d * d);
            }
            Model::PowerLaw => {
                let xb = x.powf(p[1]);
                g[0] = xb;
                g[1] = p[0] * xb * x.ln();
            }
        }
    }

    fn splitting(&self) -> f64 {
        match self {
            Model::HyperfineTriplet { splitting } => *splitting,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Model::HyperfineTriplet { splitting } = self {
            if !(*splitting > 0.0 && splitting.is_finite()) {
                return Err(Error::invalid("splitting", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Detection roll-off curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthModel {
    pub amplitude: f64,
    /// Hz
    pub cutoff: f64,
    pub exponent: f64,
    pub offset: f64,
}

impl BandwidthModel {
    pub fn eval(&self, f: f64) -> f64 {
        Model::Bandwidth.eval(&[self.amplitude, self.cutoff, self.exponent, self.offset], f)
    }
}

/// Random telegraph spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelegraphModel {
    /// Switching amplitude, tesla.
    pub amplitude: f64,
    /// Mean dwell, seconds.
    pub dwell: f64,
}

impl TelegraphModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.dwell > 0.0) {
            return Err(Error::invalid("telegraph", "amplitude and dwell must be positive"));
        }
        Ok(())
    }

    /// Frequency where the spectrum falls to half its DC value.
    pub fn half_power_frequency(&self) -> f64 {
        1.0 / (PI * self.dwell)
    }
}

/// `A^2 / (2 T ((1/T)^2 + (pi f)^2))`, the one-sided spectrum of a symmetric
/// telegraph of peak-to-peak amplitude `A` and mean dwell `T`.
pub fn telegraph_psd(model: &TelegraphModel, f: f64) -> f64 {
    let (a, t) = (model.amplitude, model.dwell);
    a * a * t / (2.0 * (1.0 + (PI * f * t).powi(2)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub model: Model,
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// 1-sigma, from the curvature of the residual surface.
    pub sigmas: Vec<f64>,
    /// `sqrt(sum r^2)` of weighted residuals.
    pub residual: f64,
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Cost after each accepted step, starting with the initial guess.
    #[serde(skip, default)]
    pub cost_history: Vec<f64>,
}

impl FitResult {
    /// Estimates from a fit that did not converge are not to be trusted.
    pub fn authoritative(&self) -> bool {
        self.converged
    }

    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| (self.params[i], self.sigmas[i]))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.model.eval(&self.params, x)
    }

    pub fn reduced_chi2(&self) -> f64 {
        self.residual * self.residual / self.dof.max(1) as f64
    }

    pub fn bandwidth(&self) -> Option<BandwidthModel> {
        (self.model == Model::Bandwidth).then(|| BandwidthModel {
            amplitude: self.params[0],
            cutoff: self.params[1],
            exponent: self.params[2],
            offset: self.params[3],
        })
    }

    pub fn telegraph(&self) -> Option<TelegraphModel> {
        (self.model == Model::Telegraph).then(|| TelegraphModel {
            amplitude: self.params[0],
            dwell: self.params[1],
        })
    }
}

/// Fits `model` to `(x, y)`.
///
/// Without `sigma`, PSD-like models (`bandwidth`, `telegraph`, `powerlaw`)
/// weight each point by `1/|y|` (floored at the smallest non-zero `|y|`),
/// ODMR models weight uniformly, and the covariance is scaled by the reduced
/// chi-square. Without `init`, parameters are seeded from the data.
pub fn fit(model: &Model, x: &[f64], y: &[f64], sigma: Option<&[f64]>, init: Option<&[f64]>) -> Result<FitResult> {
    fit_capped(model, x, y, sigma, init, MAX_ITERATIONS)
}

/// [`fit`] with a custom iteration cap.
pub fn fit_capped(
    model: &Model,
    x: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
    init: Option<&[f64]>,
    max_iterations: usize,
) -> Result<FitResult> {
    model.validate()?;
    let m = model.n_params();
    check_data(x, y, m)?;
    let sig: Vec<f64> = match sigma {
        Some(s) => {
            if s.len() != x.len() || s.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::invalid("sigma", "must be positive, one per point"));
            }
            s.to_vec()
        }
        None => default_sigma(model, y),
    };
    let p0 = match init {
        Some(p) => {
            if p.len() != m {
                return Err(Error::invalid("init", "wrong number of parameters"));
            }
            p.to_vec()
        }
        None => auto_init(model, x, y)?,
    };
    for (i, (&v, &pos)) in p0.iter().zip(model.positive()).enumerate() {
        if !v.is_finite() || (pos && v <= 0.0) {
            return Err(Error::FitRefused(alloc::format!(
                "initial `{}` = {v} outside its domain",
                model.param_names()[i]
            )));
        }
    }
    let mut result = levenberg_marquardt(model, x, y, &sig, &p0, max_iterations)?;
    if sigma.is_none() {
        let s = result.reduced_chi2().sqrt();
        for v in result.sigmas.iter_mut() {
            *v *= s;
        }
    }
    Ok(result)
}

fn check_data(x: &[f64], y: &[f64], m: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid("y", "length differs from x"));
    }
    if x.len() < 2 * m {
        return Err(Error::InsufficientData(alloc::format!(
            "{} points for {m} parameters; need at least {}",
            x.len(),
            2 * m
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("data", "must be finite"));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("x", "must be strictly increasing"));
    }
    Ok(())
}

fn default_sigma(model: &Model, y: &[f64]) -> Vec<f64> {
    if !model.relative_weights() {
        return alloc::vec![1.0; y.len()];
    }
    let floor = y
        .iter()
        .map(|v| v.abs())
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1.0 };
    y.iter().map(|v| v.abs().max(floor)).collect()
}

struct Problem<'a> {
    model: &'a Model,
    x: &'a [f64],
    y: &'a [f64],
    sigma: &'a [f64],
}

impl Problem<'_> {
    fn natural(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.model.positive())
            .map(|(&t, &pos)| if pos { t.exp() } else { t })
            .collect()
    }

    fn cost(&self, p: &[f64]) -> f64 {
        self.x
            .iter()
            .zip(self.y)
            .zip(self.sigma)
            .map(|((&x, &y), &s)| ((y - self.model.eval(p, x)) / s).powi(2))
            .sum()
    }

    /// Returns `(J^T J, J^T r)` in the optimisation coordinates, plus column
    /// norms of `J`.
    fn normal_equations(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let m = p.len();
        let mut jtj = alloc::vec![0.0; m * m];
        let mut jtr = alloc::vec![0.0; m];
        let mut g = alloc::vec![0.0; m];
        let chain: Vec<f64> = p
            .iter()
            .zip(self.model.positive())
            .map(|(&v, &pos)| if pos { v } else { 1.0 })
            .collect();
        for ((&x, &y), &s) in self.x.iter().zip(self.y).zip(self.sigma) {
            self.model.gradient(p, x, &mut g);
            for j in 0..m {
                g[j] *= chain[j] / s;
            }
            let r = (y - self.model.eval(p, x)) / s;
            for a in 0..m {
                jtr[a] += g[a] * r;
                for b in 0..=a {
                    jtj[a * m + b] += g[a] * g[b];
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                jtj[b * m + a] = jtj[a * m + b];
            }
        }
        let norms = (0..m).map(|j| jtj[j * m + j].sqrt()).collect();
        (jtj, jtr, norms)
    }

    fn check_rank(&self, jtj: &[f64], norms: &[f64]) -> Result<()> {
        let m = norms.len();
        let names = self.model.param_names();
        let top = norms.iter().cloned().fold(0.0, f64::max);
        for (j, &n) in norms.iter().enumerate() {
            if !(n > SINGULAR_TOL * top) {
                return Err(Error::SingularJacobian(names[j]));
            }
        }
        // pivots of the correlation matrix expose linear dependence
        let mut corr = alloc::vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                corr[a * m + b] = jtj[a * m + b] / (norms[a] * norms[b]);
            }
        }
        if let Err(j) = cholesky(&mut corr, m, SINGULAR_TOL) {
            return Err(Error::SingularJacobian(names[j]));
        }
        Ok(())
    }
}

fn levenberg_marquardt(
    model: &Model,
    x: &[f64],
    y: &[f64],
    sigma: &[f64],
    p0: &[f64],
    max_iterations: usize,
) -> Result<FitResult> {
    let prob = Problem { model, x, y, sigma };
    let m = p0.len();
    let mut theta: Vec<f64> = p0
        .iter()
        .zip(model.positive())
        .map(|(&v, &pos)| if pos { v.ln() } else { v })
        .collect();
    let mut p = prob.natural(&theta);
    let mut cost = prob.cost(&p);
    let mut history = alloc::vec![cost];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    let (jtj0, _, norms0) = prob.normal_equations(&p);
    prob.check_rank(&jtj0, &norms0)?;

    while iterations < max_iterations {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let (jtj, jtr, _) = prob.normal_equations(&p);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for j in 0..m {
                a[j * m + j] += lambda * jtj[j * m + j].max(1e-300);
            }
            let delta = match cholesky(&mut a, m, 0.0) {
                Ok(()) => cholesky_solve(&a, m, &jtr),
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + d).collect();
            let tp = prob.natural(&trial);
            let tc = prob.cost(&tp);
            if tc.is_finite() && tc < cost {
                let step = norm(&delta);
                let rel = (cost - tc) / cost;
                theta = trial;
                p = tp;
                cost = tc;
                history.push(cost);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < REL_COST_TOL || step < STEP_TOL * (norm(&theta) + STEP_TOL) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no damped step lowers the cost: stationary to working precision
            converged = true;
        }
        if converged {
            break;
        }
    }

    let (jtj, _, norms) = prob.normal_equations(&p);
    prob.check_rank(&jtj, &norms)?;
    let cov_theta = invert_spd(&jtj, m).ok_or(Error::SingularJacobian(model.param_names()[0]))?;
    let sigmas = (0..m)
        .map(|j| {
            let d = if model.positive()[j] { p[j] } else { 1.0 };
            d.abs() * cov_theta[j * m + j].max(0.0).sqrt()
        })
        .collect();
    Ok(FitResult {
        model: *model,
        names: model.param_names().iter().map(|s| s.to_string()).collect(),
        params: p,
        sigmas,
        residual: cost.sqrt(),
        dof: x.len() - m,
        converged,
        iterations,
        cost_history: history,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// In-place lower Cholesky factor. On failure returns the index of the
/// first pivot not exceeding `tol`.
fn cholesky(a: &mut [f64], m: usize, tol: f64) -> core::result::Result<(), usize> {
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= a[j * m + k] * a[j * m + k];
        }
        if !(d > tol) {
            return Err(j);
        }
        let d = d.sqrt();
        a[j * m + j] = d;
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = s / d;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &[f64], m: usize, b: &[f64]) -> Vec<f64> {
    let mut z = b.to_vec();
    for i in 0..m {
        for k in 0..i {
            z[i] -= l[i * m + k] * z[k];
        }
        z[i] /= l[i * m + i];
    }
    for i in (0..m).rev() {
        for k in i + 1..m {
            z[i] -= l[k * m + i] * z[k];
        }
        z[i] /= l[i * m + i];
    }
    z
}

fn invert_spd(a: &[f64], m: usize) -> Option<Vec<f64>> {
    let mut l = a.to_vec();
    cholesky(&mut l, m, 0.0).ok()?;
    let mut inv = alloc::vec![0.0; m * m];
    for c in 0..m {
        let mut e = alloc::vec![0.0; m];
        e[c] = 1.0;
        let col = cholesky_solve(&l, m, &e);
        for r in 0..m {
            inv[r * m + c] = col[r];
        }
    }
    Some(inv)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// First `x` where `y` crosses `level` going down, interpolated in log x
/// when possible.
fn falling_crossing(x: &[f64], y: &[f64], level: f64) -> Option<f64> {
    for i in 1..x.len() {
        if y[i - 1] >= level && y[i] < level {
            let t = (y[i - 1] - level) / (y[i - 1] - y[i]);
            return Some(if x[i - 1] > 0.0 {
                (x[i - 1].ln() + t * (x[i].ln() - x[i - 1].ln())).exp()
            } else {
                x[i - 1] + t * (x[i] - x[i - 1])
            });
        }
    }
    None
}

fn auto_init(model: &Model, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    let refuse = |why: &str| Err(Error::FitRefused(alloc::format!("{}: {why}", model.name())));
    match model {
        Model::Lorentzian | Model::HyperfineTriplet { .. } => {
            let edge = (n / 10).max(1);
            let base = median(y[..edge].iter().chain(&y[n - edge..]).copied().collect());
            let (imin, &ymin) = y
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty");
            let depth = base - ymin;
            if !(base > 0.0 && depth > 0.0) {
                return refuse("no dip below the baseline");
            }
            let half = base - depth / 2.0;
            let lo = (0..imin).rev().find(|&i| y[i] > half).map_or(x[0], |i| x[i]);
            let hi = (imin..n).find(|&i| y[i] > half).map_or(x[n - 1], |i| x[i]);
            let width = (hi - lo).max(x[1] - x[0]);
            let split = model.splitting();
            let (f0, gamma, contrast) = if split > 0.0 {
                let gamma = (width - split).max(0.5 * width);
                let side = 1.0 / (1.0 + (2.0 * split / gamma).powi(2));
                // centre on the middle of the half-depth window
                (0.5 * (lo + hi), gamma, 3.0 * depth / base / (1.0 + 2.0 * side))
            } else {
                (x[imin], width, depth / base)
            };
            Ok(alloc::vec![f0, gamma, contrast.min(0.99), base])
        }
        Model::Bandwidth => {
            let tail = (n / 10).max(1);
            let c = median(y[n - tail..].to_vec()).max(0.0);
            let a = y[0] - c;
            if !(a > 0.0) {
                return refuse("response does not rise above the high-frequency tail");
            }
            let shifted: Vec<f64> = y.iter().map(|v| v - c).collect();
            let fc = falling_crossing(x, &shifted, a / 2.0).unwrap_or(x[n / 2]);
            Ok(alloc::vec![a, fc.max(1e-300), 1.0, c])
        }
        Model::Telegraph => {
            let head = median(y[..3.min(n)].to_vec());
            if !(head > 0.0) {
                return refuse("non-positive low-frequency level");
            }
            let fh = falling_crossing(x, y, head / 2.0).unwrap_or(x[n / 2]);
            let t = 1.0 / (PI * fh.max(1e-300));
            // extrapolate the lowest point back to DC
            let dc = y[0] * (1.0 + (PI * x[0] * t).powi(2));
            Ok(alloc::vec![(2.0 * dc / t).sqrt(), t])
        }
        Model::PowerLaw => {
            let line = power_law_loglog(x, y)?;
            Ok(line.params)
        }
    }
}

/// `y = A x^b` by ordinary least squares on `(ln x, ln y)`. Sigmas come
/// from the scatter about the line.
pub fn power_law_loglog(x: &[f64], y: &[f64]) -> Result<FitResult> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InsufficientData(String::from("need at least 2 points")));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::FitRefused(String::from("log-log regression needs positive data")));
    }
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::SingularJacobian("b"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let ln_a = my - b * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(a, c)| (c - ln_a - b * a).powi(2)).sum();
    let dof = x.len().saturating_sub(2);
    let s2 = if dof > 0 { rss / dof as f64 } else { 0.0 };
    let sb = (s2 / sxx).sqrt();
    let sa = (s2 * (1.0 / n + mx * mx / sxx)).sqrt();
    let a = ln_a.exp();
    Ok(FitResult {
        model: Model::PowerLaw,
        names: alloc::vec![String::from("A"), String::from("b")],
        params: alloc::vec![a, b],
        sigmas: alloc::vec![a * sa, sb],
        residual: rss.sqrt(),
        dof,
        converged: true,
        iterations: 0,
        cost_history: alloc::vec![rss],
    })
}
