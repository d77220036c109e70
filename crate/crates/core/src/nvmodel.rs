//! ODMR lineshape, field-to-fluorescence transduction and shot-noise-limited
//! sensitivity.
//!
//! The microwave drive sits at a fixed frequency; a field `b` shifts the
//! resonance by `gamma * b` (a frequency shift, in Hz), so the detected rate is
//! `R * lineshape(mw_freq - gamma * b)`.

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// NV electron gyromagnetic ratio, Hz/T.
pub const NV_GYROMAGNETIC_RATIO: f64 = 2.8024e10;

/// 14N hyperfine splitting of the NV ground-state resonance, Hz.
pub const N14_HYPERFINE_SPLITTING: f64 = 2.1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineshapeKind {
    #[default]
    SingleLorentzian,
    /// Three equal-weight Lorentzians sharing one width, split by the 14N
    /// hyperfine interaction.
    HyperfineTriplet,
}

fn default_gamma() -> f64 {
    NV_GYROMAGNETIC_RATIO
}

fn default_splitting() -> f64 {
    N14_HYPERFINE_SPLITTING
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdmrParams {
    /// Hz
    pub center_freq: f64,
    /// Full width at half maximum, Hz.
    pub linewidth: f64,
    /// Fractional dip depth, `0 < C < 1`.
    pub contrast: f64,
    /// Detected photons per second off resonance.
    pub count_rate: f64,
    /// Hz/T
    #[serde(default = "default_gamma")]
    pub gyromagnetic_ratio: f64,
    #[serde(default)]
    pub lineshape: LineshapeKind,
    /// Hz, used by [`LineshapeKind::HyperfineTriplet`] only.
    #[serde(default = "default_splitting")]
    pub hyperfine_splitting: f64,
}

impl OdmrParams {
    /// Single-Lorentzian parameters with the standard NV gyromagnetic ratio.
    pub fn new(center_freq: f64, linewidth: f64, contrast: f64, count_rate: f64) -> Result<Self> {
        let p = OdmrParams {
            center_freq,
            linewidth,
            contrast,
            count_rate,
            gyromagnetic_ratio: NV_GYROMAGNETIC_RATIO,
            lineshape: LineshapeKind::SingleLorentzian,
            hyperfine_splitting: N14_HYPERFINE_SPLITTING,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_triplet(mut self, splitting: f64) -> Result<Self> {
        self.lineshape = LineshapeKind::HyperfineTriplet;
        self.hyperfine_splitting = splitting;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center_freq.is_finite() {
            return Err(Error::invalid("center_freq", "must be finite"));
        }
        if !(self.linewidth > 0.0 && self.linewidth.is_finite()) {
            return Err(Error::invalid("linewidth", "must be > 0"));
        }
        if !(self.contrast > 0.0 && self.contrast < 1.0) {
            return Err(Error::invalid("contrast", "must lie in (0, 1)"));
        }
        if !(self.count_rate > 0.0 && self.count_rate.is_finite()) {
            return Err(Error::invalid("count_rate", "must be > 0"));
        }
        if !(self.gyromagnetic_ratio > 0.0 && self.gyromagnetic_ratio.is_finite()) {
            return Err(Error::invalid("gyromagnetic_ratio", "must be > 0"));
        }
        if !(self.hyperfine_splitting >= 0.0 && self.hyperfine_splitting.is_finite()) {
            return Err(Error::invalid("hyperfine_splitting", "must be >= 0"));
        }
        Ok(())
    }
}

/// Fixed microwave drive frequency during sensing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivePoint {
    pub mw_freq: f64,
}

impl DrivePoint {
    /// Drive at the point of steepest slope.
    pub fn at_sensing_point(params: &OdmrParams) -> Self {
        DrivePoint {
            mw_freq: sensing_point(params),
        }
    }
}

#[inline]
fn lorentz(x: f64, center: f64, width: f64) -> f64 {
    let u = 2.0 * (x - center) / width;
    1.0 / (1.0 + u * u)
}

#[inline]
fn lorentz_slope(x: f64, center: f64, width: f64) -> f64 {
    let u = 2.0 * (x - center) / width;
    let h = 1.0 / (1.0 + u * u);
    -4.0 * u * h * h / width
}

fn peak_offsets(params: &OdmrParams) -> &'static [f64] {
    match params.lineshape {
        LineshapeKind::SingleLorentzian => &[0.0],
        LineshapeKind::HyperfineTriplet => &[-1.0, 0.0, 1.0],
    }
}

/// Normalized fluorescence at microwave frequency `f`; lies in `(1 - C, 1]`.
pub fn lineshape(params: &OdmrParams, f: f64) -> f64 {
    let offsets = peak_offsets(params);
    let weight = params.contrast / offsets.len() as f64;
    let dip: f64 = offsets
        .iter()
        .map(|k| lorentz(f, params.center_freq + k * params.hyperfine_splitting, params.linewidth))
        .sum();
    1.0 - weight * dip
}

/// `d lineshape / df`, per Hz.
pub fn lineshape_slope(params: &OdmrParams, f: f64) -> f64 {
    let offsets = peak_offsets(params);
    let weight = params.contrast / offsets.len() as f64;
    -weight
        * offsets
            .iter()
            .map(|k| {
                lorentz_slope(f, params.center_freq + k * params.hyperfine_splitting, params.linewidth)
            })
            .sum::<f64>()
}

/// Microwave frequency of maximum `|slope|` on the high-frequency side.
///
/// Closed form `f0 + linewidth / (2 sqrt 3)` for a single Lorentzian; for the
/// triplet a dense grid search refined by golden-section search.
pub fn sensing_point(params: &OdmrParams) -> f64 {
    match params.lineshape {
        LineshapeKind::SingleLorentzian => params.center_freq + params.linewidth / (2.0 * 3.0.sqrt()),
        LineshapeKind::HyperfineTriplet => {
            let lo = params.center_freq;
            let hi = params.center_freq + 2.0 * params.hyperfine_splitting + 2.0 * params.linewidth;
            let (f, _) = argmax_abs_slope(params, lo, hi, 20_000);
            f
        }
    }
}

/// Dense-grid argmax of `|slope|` on `[lo, hi]`, refined by golden section
/// around the best grid point. Returns `(frequency, |slope|)`.
pub fn argmax_abs_slope(params: &OdmrParams, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let step = (hi - lo) / n as f64;
    let score = |f: f64| lineshape_slope(params, f).abs();
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..=n {
        let v = score(lo + step * i as f64);
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    let mut a = lo + step * (best.saturating_sub(1)) as f64;
    let mut b = (lo + step * (best + 1) as f64).min(hi);
    let inv_phi = (5.0.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c = b - inv_phi * (b - a);
        let d = a + inv_phi * (b - a);
        if score(c) > score(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let f = 0.5 * (a + b);
    (f, score(f))
}

/// Detected photon rate for a field `b` (tesla) along the NV axis.
pub fn transduce(params: &OdmrParams, drive: &DrivePoint, b: f64) -> f64 {
    params.count_rate * lineshape(params, drive.mw_freq - params.gyromagnetic_ratio * b)
}

/// `d rate / d b` at `b`, photons/s per tesla.
pub fn transduction_slope(params: &OdmrParams, drive: &DrivePoint, b: f64) -> f64 {
    -params.count_rate
        * params.gyromagnetic_ratio
        * lineshape_slope(params, drive.mw_freq - params.gyromagnetic_ratio * b)
}

/// Shot-noise-limited sensitivity at the sensing point, T/sqrt(Hz):
/// `4 / (3 sqrt 3) * linewidth / gamma / (C sqrt R)`.
pub fn sensitivity(params: &OdmrParams) -> f64 {
    4.0 / (3.0 * 3.0.sqrt()) * params.linewidth / params.gyromagnetic_ratio
        / (params.contrast * params.count_rate.sqrt())
}

/// Field scale `sqrt(3) * linewidth / gamma` (tesla) that peak-to-peak
/// signals must stay well below for linear transduction.
pub fn linearity_bound(params: &OdmrParams) -> f64 {
    3.0.sqrt() * params.linewidth / params.gyromagnetic_ratio
}

/// A sample row with its tabulated ideal sensitivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRow {
    pub label: &'static str,
    pub params: OdmrParams,
    /// Tabulated sensitivity, T/sqrt(Hz).
    pub tabulated_eta: f64,
}

fn sample(label: &'static str, linewidth: f64, contrast_pct: f64, rate: f64, eta_ut: f64) -> SampleRow {
    SampleRow {
        label,
        params: OdmrParams {
            center_freq: 2.87e9,
            linewidth,
            contrast: contrast_pct / 100.0,
            count_rate: rate,
            gyromagnetic_ratio: NV_GYROMAGNETIC_RATIO,
            lineshape: LineshapeKind::SingleLorentzian,
            hyperfine_splitting: N14_HYPERFINE_SPLITTING,
        },
        tabulated_eta: eta_ut * 1e-6,
    }
}

/// The three characterized samples: two single centers and an ensemble.
pub fn reference_samples() -> Vec<SampleRow> {
    alloc::vec![
        sample("A (NV15)", 9.6e6, 11.62, 72_000.0, 8.5),
        sample("A (NV32)", 8.0e6, 10.58, 60_000.0, 8.5),
        sample("B (Ensemble)", 15e6, 1.61, 3_700_000.0, 13.3),
    ]
}

/// Single-center sample with an 8 MHz single-Lorentzian linewidth.
pub fn nv32() -> OdmrParams {
    reference_samples()[1].params
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(linewidth: f64) -> OdmrParams {
        OdmrParams::new(2.87e9, linewidth, 0.1, 1e5).unwrap()
    }

    #[test]
    fn single_lorentzian_landmarks() {
        let p = params(8e6);
        assert!((lineshape(&p, p.center_freq) - 0.9).abs() < 1e-15);
        assert!((lineshape(&p, p.center_freq + 4e6) - 0.95).abs() < 1e-15);
        assert!((lineshape(&p, p.center_freq - 4e6) - 0.95).abs() < 1e-15);
        assert!((lineshape(&p, 1e15) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sensing_point_offset() {
        let p = params(8e6);
        let offset = sensing_point(&p) - p.center_freq;
        // 8.0 / (2 * 1.7320508) = 2.3094011 MHz
        assert!((offset - 2.309_401e6).abs() < 1.0);
        let p2 = params(16e6);
        assert!(((sensing_point(&p2) - p2.center_freq) / offset - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sensing_point_is_slope_argmax() {
        let p = params(8e6);
        let lo = p.center_freq;
        let hi = p.center_freq + 20e6;
        let n = 200_000;
        let step = (hi - lo) / n as f64;
        // independent dense scan using centered differences of the lineshape
        let mut best = (0.0, 0.0);
        for i in 1..n {
            let f = lo + step * i as f64;
            let d = (lineshape(&p, f + 1.0) - lineshape(&p, f - 1.0)).abs() / 2.0;
            if d > best.1 {
                best = (f, d);
            }
        }
        assert!((best.0 - sensing_point(&p)).abs() <= step);
    }

    #[test]
    fn rate_at_sensing_point() {
        let p = params(8e6);
        let d = DrivePoint::at_sensing_point(&p);
        let r = transduce(&p, &d, 0.0);
        assert!((r / (p.count_rate * (1.0 - 0.75 * p.contrast)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn slope_at_sensing_point_matches_finite_differences() {
        let p = params(8e6);
        let f = sensing_point(&p);
        // closed form 3 sqrt(3) / 4 * C / linewidth
        let analytic = 3.0 * 3.0f64.sqrt() / 4.0 * p.contrast / p.linewidth;
        assert!((lineshape_slope(&p, f) / analytic - 1.0).abs() < 1e-12);
        let h = 1e-6 * f;
        let fd = (lineshape(&p, f + h) - lineshape(&p, f - h)) / (2.0 * h);
        assert!((fd / analytic - 1.0).abs() < 1e-6, "{fd} vs {analytic}");
    }

    #[test]
    fn far_detuned_rate_approaches_count_rate() {
        let p = params(8e6);
        let d = DrivePoint::at_sensing_point(&p);
        let b = -10.0 * p.linewidth / p.gyromagnetic_ratio;
        let r = transduce(&p, &d, b);
        assert!(r / p.count_rate > 0.995);
    }

    #[test]
    fn tabulated_sensitivities() {
        for row in reference_samples() {
            let eta = sensitivity(&row.params);
            assert!((eta / row.tabulated_eta - 1.0).abs() < 0.02, "{}: {eta}", row.label);
        }
    }

    #[test]
    fn doubling_count_rate_scales_by_sqrt2() {
        let p = params(8e6);
        let mut q = p;
        q.count_rate *= 2.0;
        assert!((sensitivity(&p) / sensitivity(&q) - 2.0f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn linearity_bound_values() {
        let b = linearity_bound(&params(8e6));
        assert!((b - 494.4e-6).abs() < 0.5e-6, "{b}");
        assert!(b < 500e-6);
        assert!((linearity_bound(&params(16e6)) / b - 2.0).abs() < 1e-14);
    }

    #[test]
    fn triplet_collapses_to_single() {
        let p = params(4e6);
        let t = p.with_triplet(0.0).unwrap();
        for i in -50..50 {
            let f = p.center_freq + f64::from(i) * 2e5;
            assert!((lineshape(&p, f) - lineshape(&t, f)).abs() < 1e-15);
        }
    }

    #[test]
    fn triplet_sensing_point_is_on_high_side() {
        let t = params(4e6).with_triplet(2.1e6).unwrap();
        let f = sensing_point(&t);
        assert!(f > t.center_freq + 2.1e6);
        let h = 100.0;
        assert!(lineshape_slope(&t, f).abs() >= lineshape_slope(&t, f + h).abs());
        assert!(lineshape_slope(&t, f).abs() >= lineshape_slope(&t, f - h).abs());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(OdmrParams::new(2.87e9, 8e6, 1.0, 1e5).is_err());
        assert!(OdmrParams::new(2.87e9, 0.0, 0.1, 1e5).is_err());
        assert!(OdmrParams::new(2.87e9, 8e6, 0.1, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn rate_bounded(b in -1e-2f64..1e-2, c in 0.01f64..0.9, triplet in any::<bool>()) {
            let mut p = OdmrParams::new(2.87e9, 8e6, c, 6e4).unwrap();
            if triplet {
                p = p.with_triplet(2.1e6).unwrap();
            }
            let d = DrivePoint::at_sensing_point(&p);
            let r = transduce(&p, &d, b);
            prop_assert!(r >= p.count_rate * (1.0 - c) && r <= p.count_rate);
            prop_assert!(r > 0.0);
        }

        #[test]
        fn triplet_converges_pointwise(df in -3e7f64..3e7) {
            let p = params(6e6);
            let small = p.with_triplet(1.0).unwrap();
            let f = p.center_freq + df;
            prop_assert!((lineshape(&p, f) - lineshape(&small, f)).abs() < 1e-6);
        }
    }
}
