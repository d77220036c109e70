//! Target magnetic waveforms `b(t)`, in tesla.
//!
//! A [`SignalSpec`] is a declarative sum of tones, phase-modulated carriers
//! and random telegraph components. [`Signal::new`] materializes the
//! stochastic parts so that evaluation is a pure function of time.
//!
//! Telegraph components switch between the symmetric levels `+A/2` and
//! `-A/2`, so `A` is the peak-to-peak switching amplitude. This is the
//! normalization under which [`crate::fitkit::telegraph_psd`] is the
//! one-sided spectral density of the waveform.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Angle between the NV axis and the applied field for (100) diamond, 54.7°.
pub const DEFAULT_PROJECTION_ANGLE: f64 = 54.7 * PI / 180.0;

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let wrapped = num_traits::Euclid::rem_euclid(&(phase + PI), &TAU) - PI;
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if wrapped >= PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

fn check_finite(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, "must be finite"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneSpec {
    /// Hz
    pub frequency: f64,
    /// tesla
    pub amplitude: f64,
    /// radians, in `[-pi, pi)` once validated
    #[serde(default)]
    pub phase: f64,
}

impl ToneSpec {
    pub fn new(frequency: f64, amplitude: f64, phase: f64) -> Result<Self> {
        let mut tone = ToneSpec {
            frequency,
            amplitude,
            phase,
        };
        tone.validate()?;
        tone.phase = wrap_phase(phase);
        Ok(tone)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("tone.frequency", self.frequency)?;
        check_finite("tone.amplitude", self.amplitude)?;
        check_finite("tone.phase", self.phase)?;
        if self.frequency < 0.0 {
            return Err(Error::invalid("tone.frequency", "must be >= 0"));
        }
        if self.amplitude < 0.0 {
            return Err(Error::invalid("tone.amplitude", "must be >= 0"));
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * (TAU * self.frequency * t + self.phase).cos()
    }
}

/// `amplitude * cos(2 pi carrier t + depth * sin(2 pi mod_frequency t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseModSpec {
    pub carrier: f64,
    pub mod_frequency: f64,
    pub mod_depth: f64,
    pub amplitude: f64,
}

impl PhaseModSpec {
    pub fn validate(&self) -> Result<()> {
        check_finite("phase_mod.carrier", self.carrier)?;
        check_finite("phase_mod.mod_frequency", self.mod_frequency)?;
        check_finite("phase_mod.mod_depth", self.mod_depth)?;
        check_finite("phase_mod.amplitude", self.amplitude)?;
        if self.mod_depth < 0.0 {
            return Err(Error::invalid("phase_mod.mod_depth", "must be >= 0"));
        }
        if !(self.mod_frequency > 0.0 && self.carrier > self.mod_frequency) {
            return Err(Error::invalid(
                "phase_mod.mod_frequency",
                "need carrier > mod_frequency > 0",
            ));
        }
        if self.amplitude < 0.0 {
            return Err(Error::invalid("phase_mod.amplitude", "must be >= 0"));
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        let phase = TAU * self.carrier * t + self.mod_depth * (TAU * self.mod_frequency * t).sin();
        self.amplitude * phase.cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelegraphSpec {
    /// Mean dwell time `T` in either state, seconds.
    pub mean_dwell: f64,
    /// Peak-to-peak switching amplitude `A`, tesla.
    pub amplitude: f64,
    pub trace_duration: f64,
    pub n_traces: usize,
    pub rng_seed: u64,
}

impl TelegraphSpec {
    pub fn validate(&self) -> Result<()> {
        check_finite("telegraph.mean_dwell", self.mean_dwell)?;
        check_finite("telegraph.amplitude", self.amplitude)?;
        check_finite("telegraph.trace_duration", self.trace_duration)?;
        if self.mean_dwell <= 0.0 {
            return Err(Error::invalid("telegraph.mean_dwell", "must be > 0"));
        }
        if self.amplitude < 0.0 {
            return Err(Error::invalid("telegraph.amplitude", "must be >= 0"));
        }
        if self.trace_duration <= 0.0 {
            return Err(Error::invalid("telegraph.trace_duration", "must be > 0"));
        }
        if self.n_traces == 0 {
            return Err(Error::invalid("telegraph.n_traces", "must be >= 1"));
        }
        Ok(())
    }

    /// Fewer than ten mean dwells per trace leaves too few transitions for a
    /// useful spectral estimate. Callers with a logger should warn on this.
    pub fn is_sparse(&self) -> bool {
        self.trace_duration < 10.0 * self.mean_dwell
    }
}

/// One realization of a two-state telegraph waveform on `[0, duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TelegraphTrace {
    pub id: usize,
    pub initial_high: bool,
    /// Strictly increasing switching instants in `(0, duration)`.
    pub switch_times: Vec<f64>,
    pub duration: f64,
    pub amplitude: f64,
}

impl TelegraphTrace {
    fn level(&self, high: bool) -> f64 {
        if high {
            0.5 * self.amplitude
        } else {
            -0.5 * self.amplitude
        }
    }

    /// Level at time `t` (right-continuous at switches).
    pub fn level_at(&self, t: f64) -> f64 {
        let switches = self.switch_times.partition_point(|&s| s <= t);
        self.level(self.initial_high ^ (switches % 2 == 1))
    }

    /// Dwell durations between consecutive switches. The censored first and
    /// last intervals are excluded.
    pub fn complete_dwells(&self) -> Vec<f64> {
        self.switch_times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `(switch_time, level after the switch)` records, starting with the
    /// initial level at t = 0.
    pub fn records(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.switch_times.len() + 1);
        let mut high = self.initial_high;
        out.push((0.0, self.level(high)));
        for &s in &self.switch_times {
            high = !high;
            out.push((s, self.level(high)));
        }
        out
    }
}

/// Draws `n_traces` independent telegraph traces with exponentially
/// distributed dwells. Trace `k` uses ChaCha stream `k` of the seed, so
/// traces can be generated in any order or in parallel.
pub fn generate_telegraph(spec: &TelegraphSpec) -> Result<Vec<TelegraphTrace>> {
    spec.validate()?;
    Ok((0..spec.n_traces)
        .map(|id| generate_trace(spec, id))
        .collect())
}

fn generate_trace(spec: &TelegraphSpec, id: usize) -> TelegraphTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream(id as u64);
    let initial_high = rng.random::<bool>();
    let mut switch_times = Vec::new();
    let mut t = 0.0;
    loop {
        // 1 - U lies in (0, 1], so the log is finite
        let u: f64 = rng.random();
        t += -spec.mean_dwell * (1.0 - u).ln();
        if t >= spec.trace_duration {
            break;
        }
        if switch_times.last().map_or(t > 0.0, |&last| t > last) {
            switch_times.push(t);
        }
    }
    TelegraphTrace {
        id,
        initial_high,
        switch_times,
        duration: spec.trace_duration,
        amplitude: spec.amplitude,
    }
}

/// The on/off measurement schedule used for telegraph experiments: each
/// trace is played `repeats_on` times, followed by `segments_off` segments
/// with the field off, and the whole block is repeated `cycles` times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnOffProtocol {
    pub repeats_on: usize,
    pub segments_off: usize,
    pub cycles: usize,
}

impl Default for OnOffProtocol {
    fn default() -> Self {
        OnOffProtocol {
            repeats_on: 30,
            segments_off: 30,
            cycles: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledSegment {
    pub trace_id: usize,
    pub cycle: usize,
    pub index: usize,
    pub signal_on: bool,
}

impl OnOffProtocol {
    pub fn schedule(&self, trace_id: usize) -> Vec<ScheduledSegment> {
        let mut out = Vec::with_capacity(self.cycles * (self.repeats_on + self.segments_off));
        for cycle in 0..self.cycles {
            for index in 0..self.repeats_on {
                out.push(ScheduledSegment {
                    trace_id,
                    cycle,
                    index,
                    signal_on: true,
                });
            }
            for index in 0..self.segments_off {
                out.push(ScheduledSegment {
                    trace_id,
                    cycle,
                    index,
                    signal_on: false,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Component {
    Tone(ToneSpec),
    PhaseMod(PhaseModSpec),
    Telegraph(TelegraphSpec),
}

fn default_projection() -> f64 {
    DEFAULT_PROJECTION_ANGLE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    #[serde(default)]
    pub components: Vec<Component>,
    /// Angle between the NV axis and the applied field, radians.
    #[serde(default = "default_projection")]
    pub projection_angle: f64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec {
            components: Vec::new(),
            projection_angle: DEFAULT_PROJECTION_ANGLE,
        }
    }
}

impl SignalSpec {
    pub fn new(components: Vec<Component>, projection_angle: f64) -> Self {
        SignalSpec {
            components,
            projection_angle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("projection_angle", self.projection_angle)?;
        for c in &self.components {
            match c {
                Component::Tone(t) => t.validate()?,
                Component::PhaseMod(p) => p.validate()?,
                Component::Telegraph(t) => t.validate()?,
            }
        }
        Ok(())
    }

    pub fn projection(&self) -> f64 {
        self.projection_angle.cos()
    }

    /// Upper bound on `|b(t)|` after projection.
    pub fn peak_amplitude(&self) -> f64 {
        let raw: f64 = self
            .components
            .iter()
            .map(|c| match c {
                Component::Tone(t) => t.amplitude,
                Component::PhaseMod(p) => p.amplitude,
                Component::Telegraph(t) => 0.5 * t.amplitude,
            })
            .sum();
        raw * self.projection().abs()
    }

    /// Highest deterministic frequency present, ignoring telegraph content.
    pub fn max_frequency(&self) -> Option<f64> {
        self.components
            .iter()
            .filter_map(|c| match c {
                Component::Tone(t) => Some(t.frequency),
                Component::PhaseMod(p) => {
                    // Carson's rule upper edge
                    Some(p.carrier + (p.mod_depth + 1.0) * p.mod_frequency)
                }
                Component::Telegraph(_) => None,
            })
            .reduce(f64::max)
    }
}

/// A [`SignalSpec`] with its telegraph traces generated.
///
/// Telegraph component traces are laid end to end: trace `k` covers
/// `[k * trace_duration, (k + 1) * trace_duration)`.
#[derive(Debug, Clone)]
pub struct Signal {
    spec: SignalSpec,
    traces: Vec<Vec<TelegraphTrace>>,
    projection: f64,
}

impl Signal {
    pub fn new(spec: SignalSpec) -> Result<Self> {
        spec.validate()?;
        let mut traces = Vec::new();
        for c in &spec.components {
            if let Component::Telegraph(t) = c {
                traces.push(generate_telegraph(t)?);
            }
        }
        let projection = spec.projection();
        Ok(Signal {
            spec,
            traces,
            projection,
        })
    }

    pub fn spec(&self) -> &SignalSpec {
        &self.spec
    }

    /// Generated traces of the `i`-th telegraph component.
    pub fn telegraph_traces(&self, i: usize) -> Option<&[TelegraphTrace]> {
        self.traces.get(i).map(Vec::as_slice)
    }

    /// Time span over which every telegraph component is defined.
    pub fn span(&self) -> f64 {
        self.spec
            .components
            .iter()
            .filter_map(|c| match c {
                Component::Telegraph(t) => Some(t.trace_duration * t.n_traces as f64),
                _ => None,
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Field along the NV axis at time `t`, tesla.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        Ok(self.evaluate_unprojected(t)? * self.projection)
    }

    /// Field before projection onto the NV axis.
    pub fn evaluate_unprojected(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::invalid("t", "must be >= 0"));
        }
        let mut sum = 0.0;
        let mut telegraph = 0;
        for c in &self.spec.components {
            sum += match c {
                Component::Tone(tone) => tone.value(t),
                Component::PhaseMod(pm) => pm.value(t),
                Component::Telegraph(spec) => {
                    let traces = &self.traces[telegraph];
                    telegraph += 1;
                    let span = spec.trace_duration * spec.n_traces as f64;
                    if t > span {
                        return Err(Error::OutOfRange { t, span });
                    }
                    let k = ((t / spec.trace_duration) as usize).min(spec.n_traces - 1);
                    traces[k].level_at(t - k as f64 * spec.trace_duration)
                }
            };
        }
        Ok(sum)
    }
}

/// Pure evaluation of a materialized signal; see [`Signal::evaluate`].
pub fn evaluate(signal: &Signal, t: f64) -> Result<f64> {
    signal.evaluate(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::bessel_j;
    use alloc::vec;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn tone(f: f64, a: f64, p: f64) -> Component {
        Component::Tone(ToneSpec::new(f, a, p).unwrap())
    }

    #[test]
    fn constructive_superposition() {
        let s = Signal::new(SignalSpec::new(vec![tone(5.0, 1.0, 0.0), tone(5.0, 1.0, 0.0)], 0.0))
            .unwrap();
        assert_eq!(s.evaluate(0.0).unwrap(), 2.0);
    }

    #[test]
    fn projection_at_magic_angle() {
        // cos(54.7 deg) = 0.577858, computed independently
        let s = Signal::new(SignalSpec::new(vec![tone(1e3, 1e-6, 0.0)], DEFAULT_PROJECTION_ANGLE))
            .unwrap();
        let v = s.evaluate(1e-3).unwrap();
        assert!((v - 0.5779e-6).abs() < 1e-10, "{v}");
    }

    #[test]
    fn phase_is_wrapped() {
        let t = ToneSpec::new(1.0, 1.0, 3.0 * PI).unwrap();
        assert!((t.phase + PI).abs() < 1e-12);
        assert_eq!(wrap_phase(PI), -PI);
        assert!(ToneSpec::new(-1.0, 1.0, 0.0).is_err());
        assert!(ToneSpec::new(1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn phase_mod_validation() {
        let bad = PhaseModSpec {
            carrier: 1e3,
            mod_frequency: 2e3,
            mod_depth: 1.0,
            amplitude: 1.0,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn phase_mod_sidebands_follow_bessel_series() {
        // 10 ms at 100 kS/s puts every 100 Hz line on an integer-period grid
        let pm = PhaseModSpec {
            carrier: 10e3,
            mod_frequency: 1e3,
            mod_depth: PI / 2.0,
            amplitude: 1.0,
        };
        let n = 1000;
        let fs = 100e3;
        let x: Vec<f64> = (0..n).map(|i| pm.value(i as f64 / fs)).collect();
        let line = |f: f64| {
            let k = (f * n as f64 / fs).round() as usize;
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &v) in x.iter().enumerate() {
                acc += Complex64::from_polar(v, -TAU * (k * i) as f64 / n as f64);
            }
            2.0 * acc.norm() / n as f64
        };
        for (m, expected) in [(0, 0.4720), (1, 0.5668), (2, 0.2497)] {
            let up = line(10e3 + 1e3 * f64::from(m));
            let down = line(10e3 - 1e3 * f64::from(m));
            assert!((up - expected).abs() < 1e-3, "n={m}: {up}");
            assert!((down - expected).abs() < 1e-3, "n=-{m}: {down}");
            assert!((up - bessel_j(m, PI / 2.0).abs()).abs() < 1e-9);
        }
    }

    fn telegraph(mean_dwell: f64, duration: f64, n: usize, seed: u64) -> TelegraphSpec {
        TelegraphSpec {
            mean_dwell,
            amplitude: 2.0,
            trace_duration: duration,
            n_traces: n,
            rng_seed: seed,
        }
    }

    #[test]
    fn mean_dwell_within_ten_percent() {
        let traces = generate_telegraph(&telegraph(1e-3, 1.0, 1, 7)).unwrap();
        let dwells = traces[0].complete_dwells();
        assert!(dwells.len() > 800 && dwells.len() < 1200, "{}", dwells.len());
        let mean = dwells.iter().sum::<f64>() / dwells.len() as f64;
        assert!((mean / 1e-3 - 1.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn pooled_dwells_pass_exponential_ks() {
        let traces = generate_telegraph(&telegraph(5e-3, 1.0, 200, 11)).unwrap();
        let mut dwells: Vec<f64> = traces.iter().flat_map(|t| t.complete_dwells()).collect();
        dwells.sort_by(f64::total_cmp);
        let n = dwells.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &x) in dwells.iter().enumerate() {
            let cdf = 1.0 - (-x / 5e-3).exp();
            d = d.max((cdf - i as f64 / n).abs()).max((cdf - (i + 1) as f64 / n).abs());
        }
        // one-sample KS critical value at alpha = 0.01
        let critical = 1.628 / n.sqrt();
        assert!(d < critical, "D = {d}, critical {critical}");
    }

    #[test]
    fn telegraph_is_reproducible() {
        let a = generate_telegraph(&telegraph(1e-3, 0.5, 3, 99)).unwrap();
        let b = generate_telegraph(&telegraph(1e-3, 0.5, 3, 99)).unwrap();
        assert_eq!(a, b);
        let c = generate_telegraph(&telegraph(1e-3, 0.5, 3, 100)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn telegraph_levels_are_symmetric() {
        let traces = generate_telegraph(&telegraph(1e-3, 0.1, 4, 3)).unwrap();
        for tr in &traces {
            for (_, level) in tr.records() {
                assert!(level == 1.0 || level == -1.0);
            }
            assert!(tr.switch_times.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn evaluate_beyond_span_is_an_error() {
        let spec = SignalSpec::new(vec![Component::Telegraph(telegraph(1e-3, 0.1, 2, 1))], 0.0);
        let s = Signal::new(spec).unwrap();
        assert!(s.evaluate(0.2).is_ok());
        assert!(matches!(s.evaluate(0.2001), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn sparse_telegraph_is_flagged() {
        assert!(telegraph(1e-2, 0.05, 1, 0).is_sparse());
        assert!(!telegraph(1e-3, 1.0, 1, 0).is_sparse());
    }

    #[test]
    fn protocol_schedule_tags_segments() {
        let p = OnOffProtocol::default();
        let sched = p.schedule(5);
        assert_eq!(sched.len(), 240);
        assert_eq!(sched.iter().filter(|s| s.signal_on).count(), 120);
        assert!(sched[..30].iter().all(|s| s.signal_on));
        assert!(sched[30..60].iter().all(|s| !s.signal_on));
    }

    #[test]
    fn telegraph_ensemble_psd_halves_at_corner() {
        // Mean periodogram of sampled traces; S(0)/S(1/(pi T)) should be ~2.
        let t_dwell = 2e-3;
        let spec = telegraph(t_dwell, 0.256, 200, 21);
        let traces = generate_telegraph(&spec).unwrap();
        let n = 8192;
        let dt = spec.trace_duration / n as f64;
        let f_corner = 1.0 / (PI * t_dwell);
        let k_corner = (f_corner * spec.trace_duration).round() as usize;
        let mut low = 0.0;
        let mut corner = 0.0;
        for tr in &traces {
            let x: Vec<f64> = (0..n).map(|i| tr.level_at(i as f64 * dt)).collect();
            let power = |k: usize| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, &v) in x.iter().enumerate() {
                    acc += Complex64::from_polar(v, -TAU * (k * i) as f64 / n as f64);
                }
                acc.norm_sqr()
            };
            // average a few low bins in place of DC (DC carries the trace mean)
            low += (1..=3).map(power).sum::<f64>() / 3.0;
            corner += (k_corner - 1..=k_corner + 1).map(power).sum::<f64>() / 3.0;
        }
        let ratio = low / corner;
        assert!((ratio / 2.0 - 1.0).abs() < 0.15, "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn projection_scales_exactly(theta in -3.0f64..3.0, t in 0.0f64..1.0,
                                     f in 0.0f64..1e4, a in 0.0f64..1e-3, p in -3.0f64..3.0) {
            let comps = vec![tone(f, a, p), tone(2.0 * f, a, -p)];
            let base = Signal::new(SignalSpec::new(comps.clone(), 0.0)).unwrap();
            let rotated = Signal::new(SignalSpec::new(comps, theta)).unwrap();
            let lhs = rotated.evaluate(t).unwrap();
            let rhs = base.evaluate(t).unwrap() * theta.cos();
            prop_assert!(lhs == rhs);
        }

        #[test]
        fn wrap_phase_range(x in -100.0f64..100.0) {
            let w = wrap_phase(x);
            prop_assert!((-PI..PI).contains(&w));
            prop_assert!(((x - w) / TAU - ((x - w) / TAU).round()).abs() < 1e-9);
        }
    }
}
