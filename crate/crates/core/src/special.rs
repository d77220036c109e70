//! Special functions.

/// Bessel function of the first kind, integer order.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    libm::jn(n, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    // Bessel's integral J_n(x) = (1/pi) * int_0^pi cos(n tau - x sin tau) dtau,
    // by composite Simpson; independent of the series.
    fn bessel_integral(n: i32, x: f64) -> f64 {
        let steps = 4000;
        let h = PI / steps as f64;
        let f = |tau: f64| (f64::from(n) * tau - x * tau.sin()).cos();
        let mut acc = f(0.0) + f(PI);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        acc * h / 3.0 / PI
    }

    #[test]
    fn series_matches_bessel_integral() {
        for n in -6..=6 {
            for &x in &[0.1, 0.5, PI / 2.0, 3.0, 7.5] {
                let a = bessel_j(n, x);
                let b = bessel_integral(n, x);
                assert!((a - b).abs() < 1e-10, "J_{n}({x}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn quarter_turn_modulation_depth_values() {
        assert!((bessel_j(0, PI / 2.0) - 0.4720).abs() < 5e-5);
        assert!((bessel_j(1, PI / 2.0) - 0.5668).abs() < 5e-5);
        assert!((bessel_j(2, PI / 2.0) - 0.2497).abs() < 5e-5);
        assert_eq!(bessel_j(-1, 1.0), -bessel_j(1, 1.0));
    }
}
