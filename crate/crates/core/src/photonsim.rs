//! Photon arrival streams from a time-varying detection rate.
//!
//! Arrivals are an inhomogeneous Poisson process simulated by thinning:
//! candidates are drawn at a bounding rate `R_max` and each is kept with
//! probability `rate(t) / R_max`. A finite detection bandwidth is modeled as a
//! low-pass filter acting on the rate function itself (not on photon times),
//! so responses beyond the cutoff are attenuated rather than removed.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nvmodel::{self, DrivePoint, OdmrParams};
use crate::signals::Signal;
use crate::{Error, Result};

pub const PS_PER_SECOND: f64 = 1e12;

/// A detection rate as a function of time.
pub trait RateFunction {
    /// Photons per second at `t` seconds.
    fn rate(&self, t: f64) -> Result<f64>;

    /// Bound on [`RateFunction::rate`] over the simulated window.
    fn max_rate(&self) -> f64;

    /// Highest frequency content, if known. Sets the internal grid of the
    /// bandwidth filter.
    fn max_frequency(&self) -> Option<f64> {
        None
    }
}

/// Constant rate.
#[derive(Debug, Clone, Copy)]
pub struct ConstantRate(pub f64);

impl RateFunction for ConstantRate {
    fn rate(&self, _t: f64) -> Result<f64> {
        Ok(self.0)
    }

    fn max_rate(&self) -> f64 {
        self.0
    }

    fn max_frequency(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `mean * (1 + depth * cos(2 pi frequency t + phase))`.
#[derive(Debug, Clone, Copy)]
pub struct SinusoidalRate {
    pub mean: f64,
    pub depth: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl RateFunction for SinusoidalRate {
    fn rate(&self, t: f64) -> Result<f64> {
        Ok(self.mean * (1.0 + self.depth * (TAU * self.frequency * t + self.phase).cos()))
    }

    fn max_rate(&self) -> f64 {
        self.mean * (1.0 + self.depth.abs())
    }

    fn max_frequency(&self) -> Option<f64> {
        Some(self.frequency)
    }
}

/// Fluorescence rate produced by a field signal through the ODMR lineshape,
/// observed from `t_offset` onward: `rate(t) = transduce(b(t + t_offset))`.
#[derive(Debug, Clone)]
pub struct TransducedRate<'a> {
    pub params: OdmrParams,
    pub drive: DrivePoint,
    pub signal: &'a Signal,
    pub t_offset: f64,
}

impl<'a> TransducedRate<'a> {
    pub fn new(params: OdmrParams, drive: DrivePoint, signal: &'a Signal) -> Self {
        TransducedRate {
            params,
            drive,
            signal,
            t_offset: 0.0,
        }
    }

    pub fn starting_at(mut self, t_offset: f64) -> Self {
        self.t_offset = t_offset;
        self
    }
}

impl RateFunction for TransducedRate<'_> {
    fn rate(&self, t: f64) -> Result<f64> {
        let b = self.signal.evaluate(t + self.t_offset)?;
        Ok(nvmodel::transduce(&self.params, &self.drive, b))
    }

    fn max_rate(&self) -> f64 {
        // the lineshape never exceeds 1
        self.params.count_rate
    }

    fn max_frequency(&self) -> Option<f64> {
        self.signal.spec().max_frequency()
    }
}

/// Closure-backed rate with an explicit bound.
pub struct FnRate<F> {
    pub f: F,
    pub max: f64,
    pub content: Option<f64>,
}

impl<F: Fn(f64) -> f64> RateFunction for FnRate<F> {
    fn rate(&self, t: f64) -> Result<f64> {
        Ok((self.f)(t))
    }

    fn max_rate(&self) -> f64 {
        self.max
    }

    fn max_frequency(&self) -> Option<f64> {
        self.content
    }
}

fn default_rolloff() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// -3 dB frequency of the rate-response filter, Hz; `None` is unlimited.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    /// Roll-off exponent `b` of `|H(f)|^2 = (1 + (f/f_c)^2)^-b`.
    #[serde(default = "default_rolloff")]
    pub rolloff_exponent: f64,
    /// Non-paralyzable dead time, seconds.
    #[serde(default)]
    pub dead_time: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel::ideal()
    }
}

impl DetectorModel {
    pub fn ideal() -> Self {
        DetectorModel {
            bandwidth: None,
            rolloff_exponent: 1.0,
            dead_time: 0.0,
        }
    }

    pub fn with_bandwidth(cutoff: f64) -> Self {
        DetectorModel {
            bandwidth: Some(cutoff),
            ..DetectorModel::ideal()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(fc) = self.bandwidth {
            if !(fc > 0.0) {
                return Err(Error::invalid("detector.bandwidth", "must be > 0"));
            }
        }
        if !(self.rolloff_exponent >= 0.5 && self.rolloff_exponent.is_finite()) {
            return Err(Error::invalid("detector.rolloff_exponent", "must be >= 0.5"));
        }
        if !(self.dead_time >= 0.0 && self.dead_time.is_finite()) {
            return Err(Error::invalid("detector.dead_time", "must be >= 0"));
        }
        Ok(())
    }

    /// Number of cascaded single poles, `ceil(b)`.
    pub fn poles(&self) -> usize {
        self.rolloff_exponent.ceil() as usize
    }

    /// Cutoff of each pole such that the cascade is -3 dB at `bandwidth`.
    pub fn pole_frequency(&self) -> Option<f64> {
        let n = self.poles() as f64;
        self.bandwidth
            .map(|fc| fc / (2.0.powf(1.0 / n) - 1.0).sqrt())
    }

    /// Power transfer `|H(f)|^2` of the cascade actually simulated.
    pub fn power_response(&self, f: f64) -> f64 {
        match self.pole_frequency() {
            None => 1.0,
            Some(fp) => (1.0 + (f / fp).powi(2)).powi(-(self.poles() as i32)),
        }
    }
}

/// Photon arrival times at picosecond resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagStream {
    timestamps: Vec<u64>,
    duration_ps: u64,
    pub seed: u64,
    pub source_digest: u64,
}

impl TagStream {
    /// Checks that timestamps are strictly increasing and within the duration.
    pub fn new(timestamps: Vec<u64>, duration_ps: u64, seed: u64) -> Result<Self> {
        if timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("timestamps", "must be strictly increasing"));
        }
        if timestamps.last().is_some_and(|&t| t > duration_ps) {
            return Err(Error::invalid("timestamps", "must not exceed the duration"));
        }
        Ok(TagStream {
            timestamps,
            duration_ps,
            seed,
            source_digest: 0,
        })
    }

    pub fn with_source_digest(mut self, digest: u64) -> Self {
        self.source_digest = digest;
        self
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    pub fn into_timestamps(self) -> Vec<u64> {
        self.timestamps
    }

    pub fn duration_ps(&self) -> u64 {
        self.duration_ps
    }

    pub fn duration(&self) -> f64 {
        self.duration_ps as f64 / PS_PER_SECOND
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Converts seconds to integer picoseconds, rounding to nearest.
pub fn seconds_to_ps(t: f64) -> u64 {
    (t * PS_PER_SECOND).round() as u64
}

/// Rate-filter state: a cascade of identical single poles advanced on a
/// uniform grid with a first-order-hold exponential integrator, which is exact
/// for inputs linear between grid points.
struct RateFilter<'a, R: RateFunction + ?Sized> {
    source: &'a R,
    bound: f64,
    omega: f64,
    step: f64,
    decay: f64,
    ramp: f64,
    /// Grid time of `inputs` / `outputs`.
    t: f64,
    /// Input to each stage at `t` (stage 0 input is the raw rate).
    inputs: Vec<f64>,
    outputs: Vec<f64>,
}

impl<'a, R: RateFunction + ?Sized> RateFilter<'a, R> {
    fn new(source: &'a R, pole_hz: f64, poles: usize, step: f64) -> Result<Self> {
        let x0 = checked_rate(source, 0.0)?;
        let omega = TAU * pole_hz;
        let decay = (-omega * step).exp();
        let ramp = (1.0 - decay) / (omega * step);
        Ok(RateFilter {
            source,
            bound: source.max_rate(),
            omega,
            step,
            decay,
            ramp,
            t: 0.0,
            // start in steady state with the initial rate
            inputs: alloc::vec![x0; poles],
            outputs: alloc::vec![x0; poles],
        })
    }

    fn stage(y0: f64, x0: f64, x1: f64, decay: f64, ramp: f64) -> f64 {
        x1 + (y0 - x0) * decay - (x1 - x0) * ramp
    }

    fn advance_grid(&mut self) -> Result<()> {
        let t1 = self.t + self.step;
        let mut x1 = checked_rate(self.source, t1)?;
        for i in 0..self.inputs.len() {
            let y1 = Self::stage(self.outputs[i], self.inputs[i], x1, self.decay, self.ramp);
            self.inputs[i] = x1;
            self.outputs[i] = y1;
            x1 = y1;
        }
        self.t = t1;
        Ok(())
    }

    /// Filtered rate at `t >= self.t`, advancing the grid as needed.
    fn filtered(&mut self, t: f64) -> Result<f64> {
        while t >= self.t + self.step {
            self.advance_grid()?;
        }
        let h = t - self.t;
        if h <= 0.0 {
            return Ok(*self.outputs.last().expect("at least one pole"));
        }
        let decay = (-self.omega * h).exp();
        let ramp = (1.0 - decay) / (self.omega * h);
        let mut x1 = checked_rate(self.source, t)?;
        for i in 0..self.inputs.len() {
            x1 = Self::stage(self.outputs[i], self.inputs[i], x1, decay, ramp);
        }
        if x1 > self.bound * (1.0 + 1e-9) {
            return Err(Error::RateExceedsBound {
                t,
                rate: x1,
                bound: self.bound,
            });
        }
        Ok(x1.max(0.0))
    }
}

fn checked_rate<R: RateFunction + ?Sized>(source: &R, t: f64) -> Result<f64> {
    let rate = source.rate(t)?;
    let bound = source.max_rate();
    if !(rate <= bound * (1.0 + 1e-12)) || rate.is_nan() {
        return Err(Error::RateExceedsBound { t, rate, bound });
    }
    if rate < 0.0 {
        return Err(Error::invalid("rate", "must be >= 0"));
    }
    Ok(rate)
}

/// Internal filter grid step: fine enough for both the pole and the signal.
fn filter_step(pole_hz: f64, content: Option<f64>) -> f64 {
    let mut step = 1.0 / (32.0 * pole_hz);
    if let Some(f) = content.filter(|&f| f > 0.0) {
        step = step.min(1.0 / (32.0 * f));
    }
    step
}

/// Simulates detected photon arrivals over `[0, duration)`.
///
/// Reproducible from `seed`. Candidates that round to an already-recorded
/// picosecond are merged, so the stream is strictly increasing.
pub fn simulate_stream<R: RateFunction + ?Sized>(
    rate: &R,
    duration: f64,
    detector: &DetectorModel,
    seed: u64,
) -> Result<TagStream> {
    detector.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid("duration", "must be > 0"));
    }
    let bound = rate.max_rate();
    if !(bound >= 0.0 && bound.is_finite()) {
        return Err(Error::invalid("max_rate", "must be finite and >= 0"));
    }
    let duration_ps = seconds_to_ps(duration);
    let mut timestamps = Vec::with_capacity((bound * duration * 1.05) as usize + 16);
    if bound == 0.0 {
        return TagStream::new(timestamps, duration_ps, seed);
    }
    let mut filter = match detector.pole_frequency() {
        Some(fp) => Some(RateFilter::new(
            rate,
            fp,
            detector.poles(),
            filter_step(fp, rate.max_frequency()),
        )?),
        None => None,
    };
    let dead_ps = seconds_to_ps(detector.dead_time);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0;
    let mut last: Option<u64> = None;
    loop {
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / bound;
        if t >= duration {
            break;
        }
        let current = match filter.as_mut() {
            Some(f) => f.filtered(t)?,
            None => checked_rate(rate, t)?,
        };
        let accept: f64 = rng.random();
        if accept * bound >= current {
            continue;
        }
        let ps = seconds_to_ps(t).min(duration_ps);
        if let Some(prev) = last {
            if ps <= prev || ps - prev < dead_ps {
                continue;
            }
        }
        timestamps.push(ps);
        last = Some(ps);
    }
    TagStream::new(timestamps, duration_ps, seed)
}

/// Monotone piecewise-linear map from laser power (W) to detection
/// bandwidth (Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCalibration {
    /// `(power, cutoff)` control points, strictly increasing in power and
    /// non-decreasing in cutoff.
    pub points: Vec<(f64, f64)>,
}

/// Result of [`PowerCalibration::bandwidth_at`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interpolated {
    pub value: f64,
    /// The power lay outside the table and was clamped to its edge.
    pub clamped: bool,
}

impl PowerCalibration {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let cal = PowerCalibration { points };
        cal.validate()?;
        Ok(cal)
    }

    /// Non-authoritative placeholder spanning 30-300 uW. Replace with a
    /// measured table.
    pub fn placeholder() -> Self {
        PowerCalibration {
            points: alloc::vec![
                (30e-6, 20e3),
                (50e-6, 35e3),
                (100e-6, 70e3),
                (200e-6, 130e3),
                (300e-6, 180e3),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::invalid("calibration.points", "need at least one point"));
        }
        for w in self.points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("calibration.points", "powers must increase"));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::invalid("calibration.points", "cutoffs must not decrease"));
            }
        }
        if self.points.iter().any(|&(p, f)| !(p.is_finite() && f > 0.0)) {
            return Err(Error::invalid("calibration.points", "cutoffs must be > 0"));
        }
        Ok(())
    }

    pub fn bandwidth_at(&self, power: f64) -> Interpolated {
        let first = self.points[0];
        let last = self.points[self.points.len() - 1];
        if power <= first.0 {
            return Interpolated {
                value: first.1,
                clamped: power < first.0,
            };
        }
        if power >= last.0 {
            return Interpolated {
                value: last.1,
                clamped: power > last.0,
            };
        }
        let i = self.points.partition_point(|&(p, _)| p <= power);
        let (p0, f0) = self.points[i - 1];
        let (p1, f1) = self.points[i];
        Interpolated {
            value: f0 + (f1 - f0) * (power - p0) / (p1 - p0),
            clamped: false,
        }
    }
}

/// Detection bandwidth for a laser power; see [`PowerCalibration`].
pub fn bandwidth_from_power(power: f64, calibration: &PowerCalibration) -> Interpolated {
    calibration.bandwidth_at(power)
}
