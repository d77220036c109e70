//! Coherent averaging of independently started acquisitions.
//!
//! A trace started `t0` after a reference instant sees every spectral line
//! at `f` rotated by `2 pi f t0` (see the transform convention in
//! [`crate::spectral`]). Two reference lines at `f1 < f2` reveal that rotation
//! exactly on the comb `f1 + n (f2 - f1)`, where the correction is
//! `exp(-i (phi1 + n (phi2 - phi1)))`. Off the comb it cannot be undone.

use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::signals::wrap_phase;
use crate::spectral::{mean_from_median, Spectrum, SpectrumMeta};
use crate::{Error, Result};

/// Default single-shot phase standard error a reference must beat, rad.
pub const DEFAULT_PHASE_LIMIT: f64 = 0.1;

const FLOOR_HALF_WIDTH: usize = 50;
const FLOOR_EXCLUDE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    /// Hz
    pub f1: f64,
    /// Hz, above `f1`
    pub f2: f64,
    /// Minimum reference field amplitude, tesla. Informational; the
    /// acceptance gate is the measured phase error.
    #[serde(default)]
    pub min_amplitude: f64,
    /// rad
    #[serde(default = "default_limit")]
    pub phase_limit: f64,
}

fn default_limit() -> f64 {
    DEFAULT_PHASE_LIMIT
}

impl ReferenceSpec {
    pub fn new(f1: f64, f2: f64) -> Result<Self> {
        let r = ReferenceSpec {
            f1,
            f2,
            min_amplitude: 0.0,
            phase_limit: DEFAULT_PHASE_LIMIT,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f1 > 0.0 && self.f1.is_finite()) {
            return Err(Error::invalid("f1", "must be positive"));
        }
        if !(self.f2 > self.f1 && self.f2.is_finite()) {
            return Err(Error::invalid("f2", "must exceed f1"));
        }
        if !(self.min_amplitude >= 0.0) {
            return Err(Error::invalid("min_amplitude", "must be >= 0"));
        }
        if !(self.phase_limit > 0.0) {
            return Err(Error::invalid("phase_limit", "must be positive"));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.f2 - self.f1
    }

    /// Comb index of `f`, if `f` lies on the comb within `tol` Hz.
    pub fn comb_index(&self, f: f64, tol: f64) -> Option<i64> {
        if f <= 0.0 {
            return None;
        }
        let x = (f - self.f1) / self.spacing();
        let n = x.round();
        ((x - n).abs() * self.spacing() <= tol).then_some(n as i64)
    }

    /// Both reference bins, or a grid error if either is off-grid.
    pub fn bins(&self, spec: &Spectrum) -> Result<(usize, usize)> {
        let find = |f: f64| {
            spec.exact_bin(f).ok_or_else(|| {
                Error::GridMismatch(alloc::format!(
                    "reference {f} Hz is not a multiple of the {} Hz resolution",
                    spec.resolution()
                ))
            })
        };
        Ok((find(self.f1)?, find(self.f2)?))
    }
}

/// Smallest reference field amplitude (tesla) whose single-shot phase error
/// stays below `limit` for a record of `duration` seconds at mean count rate
/// `count_rate` and transduction slope `slope` (counts/s per tesla):
/// `sqrt(2 R / t) / (slope * limit)`.
pub fn minimum_reference_field(count_rate: f64, slope: f64, duration: f64, limit: f64) -> f64 {
    (2.0 * count_rate / duration).sqrt() / (slope.abs() * limit)
}

/// Single-shot phase standard error of the line in bin `k`, from the local
/// noise floor: `sqrt(mu / (2 P))`.
pub fn phase_sigma(spec: &Spectrum, k: usize, exclude: &[usize]) -> Option<f64> {
    let lo = k.saturating_sub(FLOOR_HALF_WIDTH).max(1);
    let hi = (k + FLOOR_HALF_WIDTH).min(spec.len() - 1);
    let mut vals: Vec<f64> = (lo..=hi)
        .filter(|j| exclude.iter().chain(core::iter::once(&k)).all(|&p| j.abs_diff(p) > FLOOR_EXCLUDE))
        .map(|j| spec.psd[j])
        .collect();
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(f64::total_cmp);
    let mu = mean_from_median(vals[vals.len() / 2]);
    let p = spec.psd[k];
    Some(if p > 0.0 { (mu / (2.0 * p)).sqrt() } else { f64::INFINITY })
}

/// Phases of the two reference lines.
pub fn extract_reference_phases(spec: &Spectrum, reference: &ReferenceSpec) -> Result<(f64, f64)> {
    reference.validate()?;
    let (k1, k2) = reference.bins(spec)?;
    for (k, f) in [(k1, reference.f1), (k2, reference.f2)] {
        let sigma = phase_sigma(spec, k, &[k1, k2]).unwrap_or(f64::INFINITY);
        if !(sigma <= reference.phase_limit) {
            return Err(Error::WeakReference {
                frequency: f,
                sigma,
                limit: reference.phase_limit,
            });
        }
    }
    Ok((spec.amplitudes[k1].arg(), spec.amplitudes[k2].arg()))
}

/// A spectrum with comb bins phase-aligned to the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasedSpectrum {
    pub spectrum: Spectrum,
    /// Phase of each stored amplitude, rad in `[-pi, pi)`.
    pub phase: Vec<f64>,
    pub comb_flag: Vec<bool>,
    pub comb_index: Vec<Option<i64>>,
    pub reference: ReferenceSpec,
}

impl PhasedSpectrum {
    pub fn comb_bins(&self) -> impl Iterator<Item = (usize, i64)> + '_ {
        self.comb_index.iter().enumerate().filter_map(|(k, n)| n.map(|n| (k, n)))
    }

    /// Bin of comb line `n`, if on the grid.
    pub fn bin_of_index(&self, n: i64) -> Option<usize> {
        self.comb_bins().find(|&(_, m)| m == n).map(|(k, _)| k)
    }
}

fn comb_layout(spec: &Spectrum, reference: &ReferenceSpec) -> Vec<Option<i64>> {
    let tol = 1e-6 * spec.resolution();
    (0..spec.len())
        .map(|k| reference.comb_index(spec.frequency(k), tol))
        .collect()
}

/// Rotates every comb bin by `-(phi1 + n (phi2 - phi1))`. Off-comb bins are
/// left untouched and unflagged.
pub fn phase_correct(spec: &Spectrum, phi1: f64, phi2: f64, reference: &ReferenceSpec) -> PhasedSpectrum {
    let comb_index = comb_layout(spec, reference);
    let mut out = spec.clone();
    for (a, n) in out.amplitudes.iter_mut().zip(&comb_index) {
        if let Some(n) = *n {
            let theta = wrap_phase(phi1 + n as f64 * (phi2 - phi1));
            *a *= Complex64::from_polar(1.0, -theta);
        }
    }
    finish(out, comb_index, *reference)
}

/// Same layout as [`phase_correct`] with no rotation applied; averaging these
/// shows what is lost without the reference.
pub fn uncorrected(spec: &Spectrum, reference: &ReferenceSpec) -> PhasedSpectrum {
    finish(spec.clone(), comb_layout(spec, reference), *reference)
}

fn finish(spectrum: Spectrum, comb_index: Vec<Option<i64>>, reference: ReferenceSpec) -> PhasedSpectrum {
    let phase = spectrum.amplitudes.iter().map(|a| wrap_phase(a.arg())).collect();
    let comb_flag = comb_index.iter().map(Option::is_some).collect();
    PhasedSpectrum {
        spectrum,
        phase,
        comb_flag,
        comb_index,
        reference,
    }
}

/// Weighted complex mean on comb bins (psd becomes `|mean|^2`); off-comb bins
/// are averaged in power only and their amplitudes zeroed.
pub fn coherent_average(traces: &[PhasedSpectrum]) -> Result<PhasedSpectrum> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InsufficientData(String::from("no spectra to average")))?;
    for t in &traces[1..] {
        if !first.spectrum.same_grid(&t.spectrum) || t.comb_index != first.comb_index {
            return Err(Error::GridMismatch(String::from(
                "spectra differ in grid or reference comb",
            )));
        }
    }
    let total: usize = traces.iter().map(|t| t.spectrum.n_averages).sum();
    let n = first.spectrum.len();
    let mut amps = alloc::vec![Complex64::new(0.0, 0.0); n];
    let mut power = alloc::vec![0.0; n];
    for t in traces {
        let w = t.spectrum.n_averages as f64 / total as f64;
        for k in 0..n {
            amps[k] += t.spectrum.amplitudes[k] * w;
            power[k] += t.spectrum.psd[k] * w;
        }
    }
    for k in 0..n {
        if first.comb_index[k].is_some() {
            power[k] = amps[k].norm_sqr();
        } else {
            amps[k] = Complex64::new(0.0, 0.0);
        }
    }
    let spectrum = Spectrum {
        amplitudes: amps,
        psd: power,
        n_averages: total,
        meta: SpectrumMeta {
            background_subtracted: traces.iter().all(|t| t.spectrum.meta.background_subtracted),
            clamped_bins: 0,
        },
        ..first.spectrum.clone()
    };
    Ok(finish(spectrum, first.comb_index.clone(), first.reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{psd_of_samples, NaiveDft, Window};
    use core::f64::consts::{PI, TAU};
    use proptest::prelude::*;

    const N: usize = 400;
    const DT: f64 = 1.0 / 400.0; // 1 s record, 1 Hz bins, Nyquist 200 Hz

    fn reference() -> ReferenceSpec {
        ReferenceSpec::new(20.0, 23.0).unwrap()
    }

    /// Lines at 20 and 23 Hz (reference), 26 and 17 Hz (comb n = 2, -1),
    /// 31 Hz (off comb), sampled from `t0`.
    fn trace(t0: f64) -> Spectrum {
        let lines = [(20.0, 1.0, 0.0), (23.0, 0.8, 0.4), (26.0, 0.5, -1.0), (17.0, 0.3, 2.0), (31.0, 0.6, 0.7)];
        let x = (0..N).map(|j| {
            let t = j as f64 * DT + t0;
            lines.iter().map(|&(f, a, p)| a * (TAU * f * t + p).cos()).sum::<f64>()
                + 1e-3 * (((j * 7919) % 101) as f64 - 50.0) / 50.0
        });
        psd_of_samples(x, N, DT, Window::None, &mut NaiveDft).unwrap()
    }

    #[test]
    fn zero_offset_phases() {
        let s = trace(0.0);
        let (p1, p2) = extract_reference_phases(&s, &reference()).unwrap();
        assert!(p1.abs() < 1e-3, "{p1}");
        assert!((p2 - 0.4).abs() < 1e-3, "{p2}");
    }

    #[test]
    fn delayed_trace_phase_matches_analytic() {
        let t0 = 0.0123;
        let pure = |f: f64| {
            let x = (0..N).map(|j| (TAU * f * (j as f64 * DT + t0)).cos());
            psd_of_samples(x, N, DT, Window::None, &mut NaiveDft).unwrap()
        };
        for f in [20.0, 23.0] {
            let s = pure(f);
            let k = s.exact_bin(f).unwrap();
            let expected = wrap_phase(TAU * f * t0);
            assert!((wrap_phase(s.amplitudes[k].arg() - expected)).abs() < 1e-3);
        }
    }

    #[test]
    fn correction_arithmetic() {
        let r = reference();
        let s = trace(0.0);
        let c = phase_correct(&s, 0.3, 1.1, &r);
        let k = c.bin_of_index(0).unwrap();
        let rot = c.spectrum.amplitudes[k] / s.amplitudes[k];
        assert!((wrap_phase(rot.arg() + 0.3)).abs() < 1e-12);
        let k3 = c.bin_of_index(3).unwrap();
        assert_eq!(k3, 29);
        let rot = c.spectrum.amplitudes[k3] / s.amplitudes[k3];
        assert!((wrap_phase(rot.arg() + 2.7)).abs() < 1e-9);
    }

    #[test]
    fn comb_flags_exactly_on_comb() {
        let c = phase_correct(&trace(0.0), 0.0, 0.0, &reference());
        for (k, &flag) in c.comb_flag.iter().enumerate() {
            let on = k > 0 && (k as i64 - 20).rem_euclid(3) == 0;
            assert_eq!(flag, on, "bin {k}");
        }
        // negative n down to the lowest positive comb frequency
        assert_eq!(c.bin_of_index(-6), Some(2));
        assert_eq!(c.bin_of_index(-7), None);
    }

    #[test]
    fn comb_closure_and_off_comb_counterexample() {
        let r = reference();
        let base = trace(0.0);
        let (a1, a2) = extract_reference_phases(&base, &r).unwrap();
        let zero = phase_correct(&base, a1, a2, &r);
        let mut off_comb_spread: f64 = 0.0;
        for i in 0..24 {
            let t0 = 0.137 * i as f64 + 0.00917 * (i * i) as f64;
            let s = trace(t0);
            let (p1, p2) = extract_reference_phases(&s, &r).unwrap();
            let c = phase_correct(&s, p1, p2, &r);
            for f in [17.0, 20.0, 23.0, 26.0] {
                let k = s.exact_bin(f).unwrap();
                let d = wrap_phase(c.phase[k] - zero.phase[k]);
                assert!(d.abs() < 1e-2, "t0 {t0} f {f}: {d}");
            }
            let k = s.exact_bin(31.0).unwrap();
            off_comb_spread = off_comb_spread.max(wrap_phase(c.phase[k] - zero.phase[k]).abs());
        }
        assert!(off_comb_spread > 1.0, "off-comb phase unexpectedly stable");
    }

    #[test]
    fn weak_reference_rejected() {
        let x = (0..N).map(|j| (((j * 7919) % 101) as f64 - 50.0) + 1e-3 * (TAU * 20.0 * j as f64 * DT).cos());
        let s = psd_of_samples(x, N, DT, Window::None, &mut NaiveDft).unwrap();
        let err = extract_reference_phases(&s, &reference()).unwrap_err();
        assert!(matches!(err, Error::WeakReference { .. }), "{err}");
    }

    #[test]
    fn off_grid_reference_rejected() {
        let r = ReferenceSpec::new(20.5, 23.0).unwrap();
        assert!(matches!(extract_reference_phases(&trace(0.0), &r), Err(Error::GridMismatch(_))));
        assert!(ReferenceSpec::new(23.0, 20.0).is_err());
    }

    #[test]
    fn identical_average_unchanged() {
        let c = phase_correct(&trace(0.0), 0.2, 0.5, &reference());
        let avg = coherent_average(&[c.clone(), c.clone(), c.clone()]).unwrap();
        for k in 0..c.spectrum.len() {
            let tol = 1e-12 * c.spectrum.psd[k].max(1e-30);
            assert!((avg.spectrum.psd[k] - c.spectrum.psd[k]).abs() <= tol.max(1e-20));
            if c.comb_flag[k] {
                assert!((avg.spectrum.amplitudes[k] - c.spectrum.amplitudes[k]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn average_rejects_mismatch() {
        let a = phase_correct(&trace(0.0), 0.0, 0.0, &reference());
        let b = phase_correct(&trace(0.0), 0.0, 0.0, &ReferenceSpec::new(20.0, 24.0).unwrap());
        assert!(matches!(coherent_average(&[a, b]), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn minimum_field_inverts_phase_error() {
        let (rate, slope, t) = (1e5, 2e9, 1.0);
        let b = minimum_reference_field(rate, slope, t, 0.1);
        let a_r = slope * b;
        let sigma = (2.0 * rate / (a_r * a_r * t)).sqrt();
        assert!((sigma - 0.1).abs() < 1e-12);
        let _ = PI;
    }

    proptest! {
        #[test]
        fn correction_preserves_psd(p1 in -PI..PI, p2 in -PI..PI) {
            let s = trace(0.0);
            let c = phase_correct(&s, p1, p2, &reference());
            for k in 0..s.len() {
                prop_assert_eq!(c.spectrum.psd[k], s.psd[k]);
                let r = c.spectrum.amplitudes[k].norm() / s.amplitudes[k].norm().max(1e-300);
                prop_assert!(s.amplitudes[k].norm() < 1e-300 || (r - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn correction_phase_is_linear_in_n(p1 in -PI..PI, p2 in -PI..PI, n in -6i64..50) {
            let s = trace(0.0);
            let c = phase_correct(&s, p1, p2, &reference());
            if let Some(k) = c.bin_of_index(n) {
                if s.amplitudes[k].norm() > 1e-6 {
                    let rot = c.spectrum.amplitudes[k] / s.amplitudes[k];
                    prop_assert!(wrap_phase(rot.arg() + p1 + n as f64 * (p2 - p1)).abs() < 1e-9);
                }
            }
        }
    }
}
