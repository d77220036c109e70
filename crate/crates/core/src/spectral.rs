//! From time tags to spectra: binning, periodograms, averaging, background
//! subtraction and signal-to-noise scaling.
//!
//! # Conventions
//!
//! * Counts are mean-subtracted before transforming, so DC carries no count
//!   level.
//! * The forward transform is `X_k = sum_n x_n exp(-2 pi i k n / N)`; a trace
//!   whose content is `cos(2 pi f (tau + t0))` shows phase `+2 pi f t0`.
//! * Only bins `0..=N/2` are stored. [`Spectrum::psd`] holds the raw
//!   periodogram `|X_k|^2`; power at negative frequencies is folded in by the
//!   one-sided weights of [`Spectrum::fold_weight`] (2 for interior bins, 1 for
//!   DC and an even-length Nyquist bin), which is what Parseval's identity and
//!   [`Spectrum::one_sided_density`] use.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{LN_2, TAU};

use num_complex::Complex64;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::photonsim::{TagStream, PS_PER_SECOND};
use crate::{Error, Result};

/// A real-input discrete Fourier transform.
pub trait RealDft {
    /// Returns bins `0..=input.len() / 2` of the forward transform of `input`.
    /// `input` may be used as scratch space.
    fn forward(&mut self, input: &mut [f64]) -> Vec<Complex64>;
}

/// Direct O(N^2) transform. Adequate for a few thousand points and as a
/// reference for faster backends.
#[derive(Debug, Default, Clone, Copy)]
pub struct NaiveDft;

impl RealDft for NaiveDft {
    fn forward(&mut self, input: &mut [f64]) -> Vec<Complex64> {
        let n = input.len();
        (0..=n / 2)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, &x) in input.iter().enumerate() {
                    // reduce k*j mod n first to keep the angle small
                    let phase = -TAU * ((k * j) % n) as f64 / n as f64;
                    acc += Complex64::new(x * phase.cos(), x * phase.sin());
                }
                acc
            })
            .collect()
    }
}

/// Photon counts in contiguous bins.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    /// seconds
    pub bin_width: f64,
    /// seconds
    pub start_time: f64,
    pub counts: Vec<u32>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.bin_width * self.counts.len() as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Highest resolvable frequency, `1 / (2 * bin_width)`.
    pub fn nyquist(&self) -> f64 {
        0.5 / self.bin_width
    }
}

/// Bin width in integer picoseconds; at least two tag resolutions.
pub fn bin_width_ps(bin_width: f64) -> Result<u64> {
    let ps = (bin_width * PS_PER_SECOND).round();
    if !(ps >= 2.0 && ps.is_finite()) {
        return Err(Error::invalid("bin_width", "must be at least 2 ps"));
    }
    Ok(ps as u64)
}

/// Streaming binner over consecutive segments.
///
/// Tag `t` (ps) falls in bin `floor((t - start) / width)` of the segment
/// containing it, i.e. bins are right-open `[k w, (k + 1) w)`. Memory is one
/// segment of bins regardless of how many tags pass through.
#[derive(Debug, Clone)]
pub struct SegmentBinner {
    width_ps: u64,
    bins_per_segment: usize,
    segment_start_ps: u64,
    current: Vec<u32>,
    last_tag: Option<u64>,
}

impl SegmentBinner {
    pub fn new(bin_width: f64, bins_per_segment: usize, start_ps: u64) -> Result<Self> {
        if bins_per_segment == 0 {
            return Err(Error::invalid("bins_per_segment", "must be >= 1"));
        }
        Ok(SegmentBinner {
            width_ps: bin_width_ps(bin_width)?,
            bins_per_segment,
            segment_start_ps: start_ps,
            current: alloc::vec![0; bins_per_segment],
            last_tag: None,
        })
    }

    fn segment_span_ps(&self) -> u64 {
        self.width_ps * self.bins_per_segment as u64
    }

    fn emit(&mut self, sink: &mut impl FnMut(TimeSeries)) {
        let counts = core::mem::replace(&mut self.current, alloc::vec![0; self.bins_per_segment]);
        sink(TimeSeries {
            bin_width: self.width_ps as f64 / PS_PER_SECOND,
            start_time: self.segment_start_ps as f64 / PS_PER_SECOND,
            counts,
        });
        self.segment_start_ps += self.segment_span_ps();
    }

    /// Adds one tag; completed segments are passed to `sink` in order.
    /// Tags must arrive in non-decreasing order.
    pub fn push(&mut self, tag_ps: u64, sink: &mut impl FnMut(TimeSeries)) -> Result<()> {
        if self.last_tag.is_some_and(|last| tag_ps < last) {
            return Err(Error::invalid("timestamps", "must be non-decreasing"));
        }
        self.last_tag = Some(tag_ps);
        if tag_ps < self.segment_start_ps {
            return Ok(());
        }
        while tag_ps >= self.segment_start_ps + self.segment_span_ps() {
            self.emit(sink);
        }
        let k = ((tag_ps - self.segment_start_ps) / self.width_ps) as usize;
        self.current[k] += 1;
        Ok(())
    }

    /// Emits every remaining complete segment up to `end_ps`. A trailing
    /// partial segment is discarded.
    pub fn finish(mut self, end_ps: u64, sink: &mut impl FnMut(TimeSeries)) {
        while self.segment_start_ps + self.segment_span_ps() <= end_ps {
            self.emit(sink);
        }
    }
}

/// Bins a whole stream into one series of `floor(duration / bin_width)`
/// complete bins. Tags in a trailing partial bin are dropped.
pub fn bin(stream: &TagStream, bin_width: f64) -> Result<TimeSeries> {
    let width = bin_width_ps(bin_width)?;
    let n = (stream.duration_ps() / width) as usize;
    let mut counts = alloc::vec![0u32; n];
    for &t in stream.timestamps() {
        let k = (t / width) as usize;
        if k < n {
            counts[k] += 1;
        }
    }
    Ok(TimeSeries {
        bin_width: width as f64 / PS_PER_SECOND,
        start_time: 0.0,
        counts,
    })
}

/// Splits a stream into consecutive segments of `segment` seconds.
pub fn bin_segments(stream: &TagStream, bin_width: f64, segment: f64) -> Result<Vec<TimeSeries>> {
    let width = bin_width_ps(bin_width)?;
    let bins = ((segment * PS_PER_SECOND).round() as u64 / width) as usize;
    let mut binner = SegmentBinner::new(bin_width, bins, 0)?;
    let mut out = Vec::new();
    let mut sink = |s: TimeSeries| out.push(s);
    for &t in stream.timestamps() {
        binner.push(t, &mut sink)?;
    }
    binner.finish(stream.duration_ps(), &mut sink);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    #[default]
    None,
    /// Periodic Hann window, amplitudes divided by its coherent gain of 1/2 so
    /// that on-bin sinusoid peaks keep their unwindowed height.
    Hann,
}

impl Window {
    pub fn coherent_gain(self) -> f64 {
        match self {
            Window::None => 1.0,
            Window::Hann => 0.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::None => "none",
            Window::Hann => "hann",
        }
    }
}

/// Bookkeeping carried along with a spectrum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    /// An off spectrum was subtracted.
    pub background_subtracted: bool,
    /// Bins where the subtraction went negative and was floored at zero.
    pub clamped_bins: usize,
}

/// Complex amplitudes and periodogram on the grid `k / duration`,
/// `k = 0..=N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bin_width: f64,
    /// Number of time samples `N` transformed.
    pub n_samples: usize,
    pub window: Window,
    pub amplitudes: Vec<Complex64>,
    pub psd: Vec<f64>,
    pub n_averages: usize,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn duration(&self) -> f64 {
        self.bin_width * self.n_samples as f64
    }

    /// Grid spacing `1 / duration`.
    pub fn resolution(&self) -> f64 {
        1.0 / self.duration()
    }

    pub fn nyquist(&self) -> f64 {
        0.5 / self.bin_width
    }

    pub fn len(&self) -> usize {
        self.psd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psd.is_empty()
    }

    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.resolution()
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.frequency(k))
    }

    /// Nearest bin to `f`.
    pub fn bin_of(&self, f: f64) -> usize {
        ((f * self.duration()).round().max(0.0) as usize).min(self.len().saturating_sub(1))
    }

    /// Bin index of `f` if it lies on the grid (relative tolerance 1e-6 of a
    /// bin).
    pub fn exact_bin(&self, f: f64) -> Option<usize> {
        let x = f * self.duration();
        let k = x.round();
        ((x - k).abs() < 1e-6 && k >= 0.0 && (k as usize) < self.len()).then_some(k as usize)
    }

    pub fn fold_weight(&self, k: usize) -> f64 {
        if k == 0 || (self.n_samples % 2 == 0 && k == self.n_samples / 2) {
            1.0
        } else {
            2.0
        }
    }

    /// One-sided spectral density of the underlying rate, in
    /// `(counts/s)^2 / Hz`: `w_k |X_k|^2 / duration`.
    pub fn one_sided_density(&self) -> Vec<f64> {
        let d = self.duration();
        self.psd
            .iter()
            .enumerate()
            .map(|(k, &p)| self.fold_weight(k) * p / d)
            .collect()
    }

    pub fn same_grid(&self, other: &Spectrum) -> bool {
        self.n_samples == other.n_samples
            && self.window == other.window
            && (self.bin_width - other.bin_width).abs() <= 1e-12 * self.bin_width
    }

    fn grid_mismatch(&self, other: &Spectrum) -> Error {
        Error::GridMismatch(alloc::format!(
            "{} samples at {} s ({}) vs {} samples at {} s ({})",
            self.n_samples,
            self.bin_width,
            self.window.name(),
            other.n_samples,
            other.bin_width,
            other.window.name()
        ))
    }
}

/// Periodogram of one series.
pub fn psd(series: &TimeSeries, window: Window, dft: &mut impl RealDft) -> Result<Spectrum> {
    psd_of_samples(
        series.counts.iter().map(|&c| f64::from(c)),
        series.len(),
        series.bin_width,
        window,
        dft,
    )
}

/// Periodogram of real samples spaced `bin_width` apart.
pub fn psd_of_samples(
    samples: impl IntoIterator<Item = f64>,
    n: usize,
    bin_width: f64,
    window: Window,
    dft: &mut impl RealDft,
) -> Result<Spectrum> {
    if n < 2 {
        return Err(Error::InsufficientData(String::from("need at least 2 samples")));
    }
    let mut x: Vec<f64> = samples.into_iter().take(n).collect();
    if x.len() != n {
        return Err(Error::InsufficientData(String::from("fewer samples than declared")));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    for v in x.iter_mut() {
        *v -= mean;
    }
    if window == Window::Hann {
        let g = 1.0 / window.coherent_gain();
        for (j, v) in x.iter_mut().enumerate() {
            *v *= g * 0.5 * (1.0 - (TAU * j as f64 / n as f64).cos());
        }
    }
    let amplitudes = dft.forward(&mut x);
    debug_assert_eq!(amplitudes.len(), n / 2 + 1);
    let psd = amplitudes.iter().map(|a| a.norm_sqr()).collect();
    Ok(Spectrum {
        bin_width,
        n_samples: n,
        window,
        amplitudes,
        psd,
        n_averages: 1,
        meta: SpectrumMeta::default(),
    })
}

/// Incoherent average weighted by each input's `n_averages`.
///
/// The stored amplitudes become the same weighted complex mean, which is
/// only meaningful for phase-stable input.
pub fn average_psd(spectra: &[Spectrum]) -> Result<Spectrum> {
    let first = spectra
        .first()
        .ok_or_else(|| Error::InsufficientData(String::from("no spectra to average")))?;
    for s in &spectra[1..] {
        if !first.same_grid(s) {
            return Err(first.grid_mismatch(s));
        }
    }
    let total: usize = spectra.iter().map(|s| s.n_averages).sum();
    let mut psd = alloc::vec![0.0; first.len()];
    let mut amplitudes = alloc::vec![Complex64::new(0.0, 0.0); first.len()];
    for s in spectra {
        let w = s.n_averages as f64 / total as f64;
        for (acc, &p) in psd.iter_mut().zip(&s.psd) {
            *acc += w * p;
        }
        for (acc, &a) in amplitudes.iter_mut().zip(&s.amplitudes) {
            *acc += a * w;
        }
    }
    Ok(Spectrum {
        amplitudes,
        psd,
        n_averages: total,
        meta: SpectrumMeta {
            background_subtracted: spectra.iter().all(|s| s.meta.background_subtracted),
            clamped_bins: 0,
        },
        ..first.clone()
    })
}

/// `on - off`, floored at zero. Removes slow drifts common to both halves of
/// an on/off measurement.
pub fn onoff_subtract(on: &Spectrum, off: &Spectrum) -> Result<Spectrum> {
    if !on.same_grid(off) {
        return Err(on.grid_mismatch(off));
    }
    if on.n_averages != off.n_averages {
        return Err(Error::GridMismatch(alloc::format!(
            "n_averages {} vs {}",
            on.n_averages,
            off.n_averages
        )));
    }
    let mut clamped = 0;
    let psd = on
        .psd
        .iter()
        .zip(&off.psd)
        .map(|(&a, &b)| {
            let d = a - b;
            if d < 0.0 {
                clamped += 1;
                0.0
            } else {
                d
            }
        })
        .collect();
    let amplitudes = on.amplitudes.iter().zip(&off.amplitudes).map(|(&a, &b)| a - b).collect();
    Ok(Spectrum {
        amplitudes,
        psd,
        meta: SpectrumMeta {
            background_subtracted: true,
            clamped_bins: clamped,
        },
        ..on.clone()
    })
}

/// Band used to estimate the noise floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBand {
    /// Hz
    pub low: f64,
    /// Hz
    pub high: f64,
    /// Bins excluded on each side of every known peak.
    #[serde(default = "default_exclusion")]
    pub exclude_bins: usize,
    /// Known peak frequencies, Hz.
    #[serde(default)]
    pub peaks: Vec<f64>,
}

fn default_exclusion() -> usize {
    3
}

impl NoiseBand {
    pub fn new(low: f64, high: f64) -> Self {
        NoiseBand {
            low,
            high,
            exclude_bins: 3,
            peaks: Vec::new(),
        }
    }

    pub fn excluding(mut self, peaks: &[f64]) -> Self {
        self.peaks.extend_from_slice(peaks);
        self
    }
}

/// Median periodogram value over the band, excluding windows around known
/// peaks. `None` if no bins remain.
pub fn noise_floor(spec: &Spectrum, band: &NoiseBand) -> Option<f64> {
    let lo = (band.low * spec.duration()).ceil().max(1.0) as usize;
    let hi = ((band.high * spec.duration()).floor() as usize).min(spec.len() - 1);
    let peak_bins: Vec<usize> = band.peaks.iter().map(|&f| spec.bin_of(f)).collect();
    let mut values: Vec<f64> = (lo..=hi)
        .filter(|k| peak_bins.iter().all(|&p| k.abs_diff(p) > band.exclude_bins))
        .map(|k| spec.psd[k])
        .collect();
    median(&mut values)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

/// Mean of an exponentially distributed periodogram from its median.
pub fn mean_from_median(median: f64) -> f64 {
    median / LN_2
}

/// Floors below this fraction of the spectral peak are arithmetic round-off,
/// not noise.
const ROUNDOFF_FLOOR: f64 = 1e-24;

/// One point of an SNR-versus-averaging-time curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    /// seconds
    pub time: f64,
    pub signal_power: f64,
    /// Median noise floor of the periodogram.
    pub noise_floor: f64,
    pub snr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrScaling {
    pub points: Vec<SnrPoint>,
    /// Fit of `snr = amplitude * time^exponent`.
    pub amplitude: f64,
    pub exponent: f64,
    pub amplitude_sigma: f64,
    pub exponent_sigma: f64,
}

impl SnrScaling {
    /// Field sensitivity (T/sqrt(Hz)) implied by the fit for a tone of
    /// `field_amplitude` tesla: the amplitude SNR of a sinusoid is
    /// `b sqrt(t) / (sqrt(2) eta)`, so `eta = b / (sqrt(2) * A)`.
    pub fn empirical_sensitivity(&self, field_amplitude: f64) -> f64 {
        field_amplitude / (2.0.sqrt() * self.amplitude)
    }
}

/// Amplitude signal-to-noise ratio of the line at `signal` in one spectrum.
///
/// For a single transform over the whole record (`n_averages == 1`) this is
/// the coherent amplitude SNR
/// `sqrt(2 (P - mu) / mu)`, with `P` the periodogram at the signal bin and
/// `mu = median / ln 2` the mean noise periodogram. For an incoherent average
/// of `n` segments it is the excess-power significance
/// `sqrt(n) (P - mu) / mu`. Both scale as `sqrt(t)` for a shot-noise-limited
/// tone. Returns `(snr, signal_power, floor_median)`.
pub fn line_snr(spec: &Spectrum, signal: f64, band: &NoiseBand) -> Result<(f64, f64, f64)> {
    let k = spec.bin_of(signal);
    let mut band = band.clone();
    if !band.peaks.iter().any(|&f| spec.bin_of(f) == k) {
        band.peaks.push(signal);
    }
    let floor = noise_floor(spec, &band)
        .ok_or_else(|| Error::InsufficientData(String::from("noise band holds no bins")))?;
    let p = spec.psd[k];
    if floor <= 0.0 {
        return Ok((f64::INFINITY, p, floor));
    }
    let mu = mean_from_median(floor);
    let excess = (p - mu).max(0.0);
    let snr = if spec.n_averages <= 1 {
        (2.0 * excess / mu).sqrt()
    } else {
        (spec.n_averages as f64).sqrt() * excess / mu
    };
    Ok((snr, p, floor))
}

/// Fits `snr = A t^b` across spectra of increasing averaging time by least
/// squares in log-log.
pub fn snr_scaling(runs: &[(f64, Spectrum)], signal: f64, band: &NoiseBand) -> Result<SnrScaling> {
    if runs.len() < 4 {
        return Err(Error::InsufficientData(String::from("need at least 4 averaging times")));
    }
    if runs.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::invalid("runs", "times must strictly increase"));
    }
    let span = runs[runs.len() - 1].0 / runs[0].0;
    if !(span >= 10.0 * (1.0 - 1e-9)) {
        return Err(Error::invalid("runs", "times must span at least one decade"));
    }
    let mut points = Vec::with_capacity(runs.len());
    for (t, spec) in runs {
        let (snr, signal_power, noise_floor) = line_snr(spec, signal, band)?;
        points.push(SnrPoint {
            time: *t,
            signal_power,
            noise_floor,
            snr,
        });
    }
    let roundoff = runs
        .iter()
        .zip(&points)
        .any(|((_, spec), p)| p.noise_floor <= ROUNDOFF_FLOOR * spec.psd.iter().fold(0.0, |m: f64, &v| m.max(v)));
    if roundoff {
        return Err(Error::FitRefused(String::from(
            "noise floor is zero (noiseless input); SNR is unbounded",
        )));
    }
    let usable: Vec<&SnrPoint> = points.iter().filter(|p| p.snr > 0.0).collect();
    if usable.is_empty() {
        return Err(Error::FitRefused(String::from(
            "signal bin does not rise above the noise floor at any time",
        )));
    }
    if usable.len() < 2 {
        return Err(Error::FitRefused(String::from(
            "signal rises above the noise floor at fewer than two times",
        )));
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.time).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.snr).collect();
    let line = crate::fitkit::power_law_loglog(&xs, &ys)?;
    Ok(SnrScaling {
        points,
        amplitude: line.params[0],
        exponent: line.params[1],
        amplitude_sigma: line.sigmas[0],
        exponent_sigma: line.sigmas[1],
    })
}
