//! Experiment configuration (TOML).

use std::f64::consts::PI;

use fenc_core::lindblad::LindbladParams;
use fenc_core::nvmodel::{self, OdmrParams};
use fenc_core::photonsim::{DetectorModel, PowerCalibration};
use fenc_core::signals::{Component, OnOffProtocol, PhaseModSpec, SignalSpec, ToneSpec};
use fenc_core::spectral::Window;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const REQUIRED_FIELDS: [&str; 3] = ["kind", "seed", "output_dir"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    SensitivityTable,
    SnrScaling,
    BandwidthSweep,
    LindbladSweep,
    Multitone,
    PhaseCoherent,
    Telegraph,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::SensitivityTable,
        Kind::SnrScaling,
        Kind::BandwidthSweep,
        Kind::LindbladSweep,
        Kind::Multitone,
        Kind::PhaseCoherent,
        Kind::Telegraph,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::SensitivityTable => "sensitivity-table",
            Kind::SnrScaling => "snr-scaling",
            Kind::BandwidthSweep => "bandwidth-sweep",
            Kind::LindbladSweep => "lindblad-sweep",
            Kind::Multitone => "multitone",
            Kind::PhaseCoherent => "phase-coherent",
            Kind::Telegraph => "telegraph",
        }
    }

    /// Name of the TOML table holding this kind's parameters.
    pub fn section(self) -> &'static str {
        match self {
            Kind::SensitivityTable => "sensitivity_table",
            Kind::SnrScaling => "snr_scaling",
            Kind::BandwidthSweep => "bandwidth_sweep",
            Kind::LindbladSweep => "lindblad_sweep",
            Kind::Multitone => "multitone",
            Kind::PhaseCoherent => "phase_coherent",
            Kind::Telegraph => "telegraph",
        }
    }
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub kind: Kind,
    pub seed: u64,
    /// Relative paths resolve against the output root.
    pub output_dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub odmr: Option<OdmrParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lindblad: Option<LindbladParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitChoices>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity_table: Option<SensitivityTableConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_scaling: Option<SnrScalingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_sweep: Option<BandwidthSweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lindblad_sweep: Option<LindbladSweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multitone: Option<MultitoneConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_coherent: Option<PhaseCoherentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub telegraph: Option<TelegraphConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitChoices {
    pub max_iterations: usize,
}

impl Default for FitChoices {
    fn default() -> Self {
        FitChoices {
            max_iterations: fenc_core::fitkit::MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub label: String,
    /// Hz
    pub linewidth: f64,
    /// fraction
    pub contrast: f64,
    /// photons/s
    pub count_rate: f64,
    /// Published sensitivity to compare against, T/sqrt(Hz).
    #[serde(default)]
    pub tabulated_eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityTableConfig {
    pub samples: Vec<SampleConfig>,
    /// Relative tolerance against `tabulated_eta`.
    pub tolerance: f64,
}

impl Default for SensitivityTableConfig {
    fn default() -> Self {
        SensitivityTableConfig {
            samples: nvmodel::reference_samples()
                .into_iter()
                .map(|r| SampleConfig {
                    label: r.label.to_string(),
                    linewidth: r.params.linewidth,
                    contrast: r.params.contrast,
                    count_rate: r.params.count_rate,
                    tabulated_eta: Some(r.tabulated_eta),
                })
                .collect(),
            tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnrScalingConfig {
    /// Averaging times, seconds; prefixes of one stream of the longest.
    pub times: Vec<f64>,
    /// seconds
    pub bin_width: f64,
    /// Noise band `[low, high]`, Hz.
    pub noise_band: [f64; 2],
    pub exponent_target: f64,
    pub exponent_tolerance: f64,
    /// Allowed ratio between empirical and ideal sensitivity.
    pub sensitivity_factor: f64,
    pub write_stream: bool,
}

impl Default for SnrScalingConfig {
    fn default() -> Self {
        SnrScalingConfig {
            times: vec![30.0, 45.0, 60.0, 90.0, 120.0, 180.0, 240.0, 300.0],
            bin_width: 1e-4,
            noise_band: [100.0, 4900.0],
            exponent_target: 0.5,
            exponent_tolerance: 0.05,
            sensitivity_factor: 1.5,
            write_stream: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandwidthSweepConfig {
    /// Detector cutoffs to simulate, Hz. Mutually exclusive with `powers`.
    pub cutoffs: Option<Vec<f64>>,
    /// Laser powers, W, mapped to cutoffs through `calibration`.
    pub powers: Option<Vec<f64>>,
    pub calibration: PowerCalibration,
    /// photons/s
    pub mean_rate: f64,
    /// Fractional rate modulation depth.
    pub depth: f64,
    /// Record length per test frequency, seconds.
    pub duration: f64,
    /// Test frequencies per cutoff, log-spaced over `[fc / span, fc * span]`.
    pub points: usize,
    pub span: f64,
    pub cutoff_tolerance: f64,
    pub exponent_target: f64,
    pub exponent_tolerance: f64,
}

impl Default for BandwidthSweepConfig {
    fn default() -> Self {
        BandwidthSweepConfig {
            cutoffs: None,
            powers: None,
            calibration: PowerCalibration::placeholder(),
            mean_rate: 1e7,
            depth: 0.5,
            duration: 0.1,
            points: 13,
            span: 10.0,
            cutoff_tolerance: 0.05,
            exponent_target: 1.0,
            exponent_tolerance: 0.1,
        }
    }
}

impl BandwidthSweepConfig {
    pub const DEFAULT_CUTOFFS: [f64; 3] = [1e4, 1e5, 1e6];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LindbladSweepConfig {
    pub saturations: Vec<f64>,
    /// Hz
    pub f_min: f64,
    /// Hz
    pub f_max: f64,
    pub points: usize,
    /// Constant floor added to the response power before fitting.
    pub offset: f64,
    /// Length of the invariant-check trajectory in units of the slowest
    /// relaxation time.
    pub check_relaxation_times: f64,
}

impl Default for LindbladSweepConfig {
    fn default() -> Self {
        LindbladSweepConfig {
            saturations: vec![0.0, 1.0, 3.0],
            f_min: 100.0,
            f_max: 1e6,
            points: 21,
            offset: 0.0,
            check_relaxation_times: 10.0,
        }
    }
}

/// Placeholder spin parameters; the published values are not available.
pub fn default_lindblad() -> LindbladParams {
    LindbladParams {
        detuning: 2.0 * PI * 4e4,
        rabi: 2.0 * PI * 5e4,
        gamma1: 5e3,
        gamma2: 1e4,
        saturation: 0.0,
        alpha: 1.0,
        gyromagnetic_ratio: nvmodel::NV_GYROMAGNETIC_RATIO,
        signal: ToneSpec {
            frequency: 1e3,
            amplitude: 1e-7,
            phase: 0.0,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultitoneConfig {
    /// seconds
    pub bin_width: f64,
    /// seconds
    pub segment: f64,
    pub segments: usize,
    pub window: Window,
    /// Required excess of each peak over the floor, in standard deviations
    /// of the averaged noise periodogram.
    pub detection_sigma: f64,
    /// Half-width of the search window around each tone, bins.
    pub search_bins: usize,
    pub write_stream: bool,
}

impl Default for MultitoneConfig {
    fn default() -> Self {
        MultitoneConfig {
            bin_width: 2e-6,
            segment: 1.0,
            segments: 30,
            window: Window::None,
            detection_sigma: 5.0,
            search_bins: 50,
            write_stream: true,
        }
    }
}

pub fn default_multitone_signal() -> SignalSpec {
    let tone = |f: f64| {
        Component::Tone(ToneSpec {
            frequency: f,
            amplitude: 50e-6,
            phase: 0.0,
        })
    };
    SignalSpec {
        components: vec![tone(8.6e3), tone(9e3), tone(86e3)],
        ..SignalSpec::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseCoherentConfig {
    pub traces: usize,
    /// seconds
    pub trace_duration: f64,
    /// Start offsets are uniform on `[0, max_offset)`, seconds.
    pub max_offset: f64,
    /// seconds
    pub bin_width: f64,
    /// Comb orders checked, inclusive.
    pub orders: [i64; 2],
    pub phase_limit: f64,
    pub amplitude_tolerance: f64,
    /// Allowed spread of corrected phases across start offsets, rad.
    pub phase_spread: f64,
    /// Allowed factor between the uncorrected suppression and `1/M`.
    pub suppression_factor: f64,
    /// Noise-free traces used for the offset-invariance check.
    pub invariance_traces: usize,
    pub write_stream: bool,
}

impl Default for PhaseCoherentConfig {
    fn default() -> Self {
        PhaseCoherentConfig {
            traces: 100,
            trace_duration: 1.0,
            max_offset: 1.0,
            bin_width: 1e-5,
            orders: [-2, 2],
            phase_limit: fenc_core::phaselock::DEFAULT_PHASE_LIMIT,
            amplitude_tolerance: 0.05,
            phase_spread: 1e-2,
            suppression_factor: 2.0,
            invariance_traces: 20,
            write_stream: true,
        }
    }
}

/// Bright single center used where the published samples are too dim for a
/// desk-scale run.
pub fn bright_center(count_rate: f64) -> OdmrParams {
    OdmrParams {
        count_rate,
        contrast: 0.116,
        ..nvmodel::nv32()
    }
}

/// Phase-modulated test field whose projected shift is 0.3 linewidths.
pub fn default_phase_signal(odmr: &OdmrParams) -> SignalSpec {
    let spec = SignalSpec::default();
    let amplitude = 0.3 * odmr.linewidth / odmr.gyromagnetic_ratio / spec.projection();
    SignalSpec {
        components: vec![Component::PhaseMod(PhaseModSpec {
            carrier: 10e3,
            mod_frequency: 1e3,
            mod_depth: PI / 2.0,
            amplitude,
        })],
        ..spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TelegraphConfig {
    /// Mean dwell times to simulate, seconds.
    pub dwell_times: Vec<f64>,
    /// Peak-to-peak applied field, tesla.
    pub amplitude: f64,
    pub traces: usize,
    /// seconds
    pub trace_duration: f64,
    pub protocol: OnOffProtocol,
    /// seconds
    pub bin_width: f64,
    /// Lowest fitted frequency, Hz.
    pub f_min: f64,
    /// Highest fitted frequency in units of the half-power frequency.
    pub f_max_factor: f64,
    /// Log-spaced frequency bands fitted.
    pub bands: usize,
    pub dwell_tolerance: f64,
    pub agreement_tolerance: f64,
    pub write_traces: bool,
}

impl Default for TelegraphConfig {
    fn default() -> Self {
        TelegraphConfig {
            dwell_times: vec![1e-3],
            amplitude: 4e-4,
            traces: 200,
            trace_duration: 1.0,
            protocol: OnOffProtocol {
                repeats_on: 1,
                segments_off: 1,
                cycles: 1,
            },
            bin_width: 1e-5,
            f_min: 2.0,
            f_max_factor: 20.0,
            bands: 60,
            dwell_tolerance: 0.1,
            agreement_tolerance: 0.1,
            write_traces: true,
        }
    }
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{field}`: {reason}"))
}

fn core(e: fenc_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be a positive finite number, got {v}")))
    }
}

fn increasing(field: &str, v: &[f64]) -> Result<()> {
    if v.windows(2).all(|w| w[1] > w[0]) {
        Ok(())
    } else {
        Err(invalid(field, "must be strictly increasing"))
    }
}

/// Parses and validates a TOML document.
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    let missing: Vec<&str> = REQUIRED_FIELDS
        .iter()
        .copied()
        .filter(|f| !table.contains_key(*f))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Config(format!(
            "missing required fields: {}",
            missing.join(", ")
        )));
    }
    if let Some(k) = table.get("kind") {
        let known = Kind::ALL.iter().any(|kind| k.as_str() == Some(kind.name()));
        if !known {
            let names: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
            return Err(invalid("kind", format!("must be one of {}, got {k}", names.join(", "))));
        }
    }
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn minimal(kind: Kind, seed: u64, output_dir: &str) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            kind,
            seed,
            output_dir: output_dir.to_string(),
            odmr: None,
            detector: None,
            signal: None,
            lindblad: None,
            fit: None,
            sensitivity_table: None,
            snr_scaling: None,
            bandwidth_sweep: None,
            lindblad_sweep: None,
            multitone: None,
            phase_coherent: None,
            telegraph: None,
        }
    }

    fn foreign_sections(&self) -> Vec<&'static str> {
        let present = [
            (Kind::SensitivityTable, self.sensitivity_table.is_some()),
            (Kind::SnrScaling, self.snr_scaling.is_some()),
            (Kind::BandwidthSweep, self.bandwidth_sweep.is_some()),
            (Kind::LindbladSweep, self.lindblad_sweep.is_some()),
            (Kind::Multitone, self.multitone.is_some()),
            (Kind::PhaseCoherent, self.phase_coherent.is_some()),
            (Kind::Telegraph, self.telegraph.is_some()),
        ];
        present
            .iter()
            .filter(|(k, p)| *p && *k != self.kind)
            .map(|(k, _)| k.section())
            .collect()
    }

    pub fn fit_choices(&self) -> FitChoices {
        self.fit.unwrap_or_default()
    }

    pub fn detector(&self) -> DetectorModel {
        self.detector.unwrap_or_default()
    }

    pub fn odmr(&self) -> OdmrParams {
        self.odmr.unwrap_or_else(|| match self.kind {
            Kind::PhaseCoherent => bright_center(1e6),
            Kind::Telegraph => bright_center(3e5),
            _ => nvmodel::nv32(),
        })
    }

    pub fn lindblad(&self) -> LindbladParams {
        self.lindblad.unwrap_or_else(default_lindblad)
    }

    /// The field applied in the run; defaults depend on the kind.
    pub fn signal(&self) -> SignalSpec {
        if let Some(s) = &self.signal {
            if self.kind != Kind::Telegraph {
                return s.clone();
            }
        }
        let base = SignalSpec {
            projection_angle: self
                .signal
                .as_ref()
                .map_or(fenc_core::signals::DEFAULT_PROJECTION_ANGLE, |s| s.projection_angle),
            ..SignalSpec::default()
        };
        match self.kind {
            Kind::SnrScaling => SignalSpec {
                components: vec![Component::Tone(ToneSpec {
                    frequency: 1e3,
                    amplitude: 4.5e-6,
                    phase: 0.0,
                })],
                ..base
            },
            Kind::Multitone => SignalSpec {
                projection_angle: base.projection_angle,
                ..default_multitone_signal()
            },
            Kind::PhaseCoherent => SignalSpec {
                projection_angle: base.projection_angle,
                ..default_phase_signal(&self.odmr())
            },
            _ => base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.output_dir.trim().is_empty() {
            return Err(invalid("output_dir", "must not be empty"));
        }
        let foreign = self.foreign_sections();
        if !foreign.is_empty() {
            return Err(CliError::Config(format!(
                "sections [{}] do not apply to kind `{}`",
                foreign.join("], ["),
                self.kind.name()
            )));
        }
        if let Some(o) = &self.odmr {
            o.validate().map_err(core)?;
        }
        self.detector().validate().map_err(core)?;
        if self.fit_choices().max_iterations == 0 {
            return Err(invalid("fit.max_iterations", "must be >= 1"));
        }
        let signal = self.signal();
        signal.validate().map_err(core)?;
        match self.kind {
            Kind::SensitivityTable => self.validate_table(),
            Kind::SnrScaling => self.validate_snr(&signal),
            Kind::BandwidthSweep => self.validate_bandwidth(),
            Kind::LindbladSweep => self.validate_lindblad(),
            Kind::Multitone => self.validate_multitone(&signal),
            Kind::PhaseCoherent => self.validate_phase(&signal),
            Kind::Telegraph => self.validate_telegraph(),
        }
    }

    fn validate_table(&self) -> Result<()> {
        let c = self.sensitivity_table.clone().unwrap_or_default();
        if c.samples.is_empty() {
            return Err(invalid("sensitivity_table.samples", "must not be empty"));
        }
        for (i, s) in c.samples.iter().enumerate() {
            OdmrParams::new(2.87e9, s.linewidth, s.contrast, s.count_rate)
                .map_err(|e| invalid(&format!("sensitivity_table.samples[{i}]"), e))?;
            if let Some(t) = s.tabulated_eta {
                positive(&format!("sensitivity_table.samples[{i}].tabulated_eta"), t)?;
            }
        }
        positive("sensitivity_table.tolerance", c.tolerance)
    }

    fn validate_snr(&self, signal: &SignalSpec) -> Result<()> {
        let c = self.snr_scaling.clone().unwrap_or_default();
        let [tone] = signal.components.as_slice() else {
            return Err(invalid("signal.components", "snr-scaling needs exactly one tone"));
        };
        let Component::Tone(tone) = tone else {
            return Err(invalid("signal.components", "snr-scaling needs a tone component"));
        };
        positive("signal.components[0].frequency", tone.frequency)?;
        positive("snr_scaling.bin_width", c.bin_width)?;
        if c.times.len() < 4 {
            return Err(invalid("snr_scaling.times", "need at least 4 averaging times"));
        }
        for &t in &c.times {
            positive("snr_scaling.times", t)?;
        }
        increasing("snr_scaling.times", &c.times)?;
        if c.times[c.times.len() - 1] < 10.0 * c.times[0] * (1.0 - 1e-9) {
            return Err(invalid("snr_scaling.times", "must span at least one decade"));
        }
        let nyquist = 0.5 / c.bin_width;
        if tone.frequency >= nyquist {
            return Err(invalid("snr_scaling.bin_width", "tone lies above the Nyquist frequency"));
        }
        let [lo, hi] = c.noise_band;
        if !(lo >= 0.0 && hi > lo && hi <= nyquist) {
            return Err(invalid("snr_scaling.noise_band", "need 0 <= low < high <= Nyquist"));
        }
        positive("snr_scaling.exponent_tolerance", c.exponent_tolerance)?;
        if !(c.sensitivity_factor >= 1.0) {
            return Err(invalid("snr_scaling.sensitivity_factor", "must be >= 1"));
        }
        Ok(())
    }

    fn validate_bandwidth(&self) -> Result<()> {
        let c = self.bandwidth_sweep.clone().unwrap_or_default();
        if c.cutoffs.is_some() && c.powers.is_some() {
            return Err(invalid("bandwidth_sweep", "give either `cutoffs` or `powers`, not both"));
        }
        c.calibration.validate().map_err(core)?;
        for (name, v) in [("cutoffs", &c.cutoffs), ("powers", &c.powers)] {
            if let Some(v) = v {
                if v.is_empty() {
                    return Err(invalid(&format!("bandwidth_sweep.{name}"), "must not be empty"));
                }
                for &x in v {
                    positive(&format!("bandwidth_sweep.{name}"), x)?;
                }
                increasing(&format!("bandwidth_sweep.{name}"), v)?;
            }
        }
        positive("bandwidth_sweep.mean_rate", c.mean_rate)?;
        if !(c.depth > 0.0 && c.depth <= 1.0) {
            return Err(invalid("bandwidth_sweep.depth", "must lie in (0, 1]"));
        }
        positive("bandwidth_sweep.duration", c.duration)?;
        if c.points < 8 {
            return Err(invalid("bandwidth_sweep.points", "need at least 8 test frequencies"));
        }
        if !(c.span > 1.0) {
            return Err(invalid("bandwidth_sweep.span", "must be > 1"));
        }
        Ok(())
    }

    fn validate_lindblad(&self) -> Result<()> {
        let c = self.lindblad_sweep.clone().unwrap_or_default();
        self.lindblad().validate().map_err(core)?;
        if c.saturations.len() < 2 {
            return Err(invalid("lindblad_sweep.saturations", "need at least 2 values"));
        }
        if c.saturations.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(invalid("lindblad_sweep.saturations", "must be >= 0"));
        }
        increasing("lindblad_sweep.saturations", &c.saturations)?;
        positive("lindblad_sweep.f_min", c.f_min)?;
        if !(c.f_max > c.f_min) {
            return Err(invalid("lindblad_sweep.f_max", "must exceed f_min"));
        }
        if c.points < 8 {
            return Err(invalid("lindblad_sweep.points", "need at least 8 frequencies"));
        }
        if !(c.offset >= 0.0) {
            return Err(invalid("lindblad_sweep.offset", "must be >= 0"));
        }
        positive("lindblad_sweep.check_relaxation_times", c.check_relaxation_times)
    }

    fn validate_multitone(&self, signal: &SignalSpec) -> Result<()> {
        let c = self.multitone.clone().unwrap_or_default();
        if signal.components.is_empty() || !signal.components.iter().all(|c| matches!(c, Component::Tone(_))) {
            return Err(invalid("signal.components", "multitone needs one or more tones only"));
        }
        positive("multitone.bin_width", c.bin_width)?;
        positive("multitone.segment", c.segment)?;
        if c.segments == 0 {
            return Err(invalid("multitone.segments", "must be >= 1"));
        }
        let nyquist = 0.5 / c.bin_width;
        if signal.max_frequency().unwrap_or(0.0) >= nyquist {
            return Err(invalid("multitone.bin_width", "a tone lies above the Nyquist frequency"));
        }
        positive("multitone.detection_sigma", c.detection_sigma)?;
        self.check_linear(signal, "signal")
    }

    fn check_linear(&self, signal: &SignalSpec, field: &str) -> Result<()> {
        let odmr = self.odmr();
        let bound = nvmodel::linearity_bound(&odmr);
        let pp = 2.0 * signal.peak_amplitude();
        if pp > bound {
            return Err(invalid(
                field,
                format!("peak-to-peak field {pp:.3e} T exceeds the linearity bound {bound:.3e} T"),
            ));
        }
        Ok(())
    }

    fn validate_phase(&self, signal: &SignalSpec) -> Result<()> {
        let c = self.phase_coherent.clone().unwrap_or_default();
        let [Component::PhaseMod(_)] = signal.components.as_slice() else {
            return Err(invalid("signal.components", "phase-coherent needs exactly one phase-mod component"));
        };
        if c.traces < 2 {
            return Err(invalid("phase_coherent.traces", "need at least 2 traces"));
        }
        positive("phase_coherent.trace_duration", c.trace_duration)?;
        positive("phase_coherent.bin_width", c.bin_width)?;
        if !(c.max_offset >= 0.0 && c.max_offset.is_finite()) {
            return Err(invalid("phase_coherent.max_offset", "must be >= 0"));
        }
        if c.orders[0] > c.orders[1] {
            return Err(invalid("phase_coherent.orders", "need low <= high"));
        }
        positive("phase_coherent.phase_limit", c.phase_limit)?;
        if c.invariance_traces < 2 {
            return Err(invalid("phase_coherent.invariance_traces", "need at least 2"));
        }
        if signal.max_frequency().unwrap_or(0.0) >= 0.5 / c.bin_width {
            return Err(invalid("phase_coherent.bin_width", "comb extends above the Nyquist frequency"));
        }
        Ok(())
    }

    fn validate_telegraph(&self) -> Result<()> {
        if self.signal.as_ref().is_some_and(|s| !s.components.is_empty()) {
            return Err(invalid(
                "signal.components",
                "telegraph builds its traces from [telegraph]; only projection_angle may be set",
            ));
        }
        let c = self.telegraph.clone().unwrap_or_default();
        if c.dwell_times.is_empty() {
            return Err(invalid("telegraph.dwell_times", "must not be empty"));
        }
        for &t in &c.dwell_times {
            positive("telegraph.dwell_times", t)?;
            if t >= c.trace_duration {
                return Err(invalid("telegraph.dwell_times", "must be shorter than the trace"));
            }
        }
        positive("telegraph.amplitude", c.amplitude)?;
        positive("telegraph.trace_duration", c.trace_duration)?;
        positive("telegraph.bin_width", c.bin_width)?;
        if c.traces == 0 {
            return Err(invalid("telegraph.traces", "must be >= 1"));
        }
        let p = c.protocol;
        if p.repeats_on == 0 || p.segments_off == 0 || p.cycles == 0 {
            return Err(invalid("telegraph.protocol", "all counts must be >= 1"));
        }
        if p.repeats_on * p.cycles != p.segments_off * p.cycles {
            return Err(invalid(
                "telegraph.protocol",
                "on and off segment counts must match for subtraction",
            ));
        }
        positive("telegraph.f_min", c.f_min)?;
        positive("telegraph.f_max_factor", c.f_max_factor)?;
        if c.bands < 8 {
            return Err(invalid("telegraph.bands", "need at least 8 bands"));
        }
        let odmr = self.odmr();
        let projected = c.amplitude * self.signal().projection().abs();
        let bound = nvmodel::linearity_bound(&odmr);
        if projected > bound {
            return Err(invalid(
                "telegraph.amplitude",
                format!("projected peak-to-peak {projected:.3e} T exceeds the linearity bound {bound:.3e} T"),
            ));
        }
        Ok(())
    }
}
