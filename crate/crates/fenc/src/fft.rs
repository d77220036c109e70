//! Real-input FFT backend for the core spectral routines.

use fenc_core::spectral::RealDft;
use num_complex::Complex64;
use realfft::RealFftPlanner;

/// Planner-backed real FFT. Plans are cached per length.
pub struct RealFft {
    planner: RealFftPlanner<f64>,
}

impl Default for RealFft {
    fn default() -> Self {
        RealFft {
            planner: RealFftPlanner::new(),
        }
    }
}

impl RealFft {
    pub fn new() -> Self {
        Self::default()
    }
}

impl RealDft for RealFft {
    fn forward(&mut self, input: &mut [f64]) -> Vec<Complex64> {
        let plan = self.planner.plan_fft_forward(input.len());
        let mut out = plan.make_output_vec();
        // lengths always match the plan, the only failure mode
        plan.process(input, &mut out).expect("buffer lengths match the plan");
        out
    }
}
