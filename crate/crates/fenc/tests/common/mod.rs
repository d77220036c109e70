//! Oracles shared by the integration tests.
#![allow(dead_code)]

use fenc_core::lindblad::LindbladParams;
use fenc_core::signals::ToneSpec;
use nalgebra::{Complex, Matrix2, Matrix4, Vector4};

pub type C = Complex<f64>;

pub fn c(re: f64) -> C {
    C::new(re, 0.0)
}

pub fn params(detuning: f64, rabi: f64, gamma1: f64, gamma2: f64, saturation: f64) -> LindbladParams {
    LindbladParams {
        detuning,
        rabi,
        gamma1,
        gamma2,
        saturation,
        alpha: 1.0,
        gyromagnetic_ratio: 2.8024e10,
        signal: ToneSpec::new(1e3, 0.0, 0.0).unwrap(),
    }
}

/// Row-major vectorisation: vec(A X B) = (A kron B^T) vec(X).
pub fn liouvillian(p: &LindbladParams) -> Matrix4<C> {
    let i = C::new(0.0, 1.0);
    let id = Matrix2::<C>::identity();
    let h = Matrix2::new(c(0.5 * p.detuning), c(-0.5 * p.rabi), c(-0.5 * p.rabi), c(-0.5 * p.detuning));
    let g1 = p.gamma1 * (1.0 + p.saturation);
    let g2 = p.gamma2 * (1.0 + p.alpha * p.saturation);
    let lower = Matrix2::new(c(0.0), c(0.0), c(1.0), c(0.0)) * c((g1 / 2.0).sqrt());
    let z = Matrix2::new(c(1.0), c(0.0), c(0.0), c(-1.0)) * c((g2 / 2.0).sqrt());
    let mut l = (h.kronecker(&id) - id.kronecker(&h.transpose())) * (-i);
    for j in [lower, z] {
        let jj = j.adjoint() * j;
        l += j.kronecker(&j.conjugate()) * c(2.0) - jj.kronecker(&id) - id.kronecker(&jj.transpose());
    }
    l
}

pub fn sz(v: &Vector4<C>) -> f64 {
    0.5 * (v[0].re - v[3].re)
}

pub fn oracle_sz(p: &LindbladParams, t: f64) -> f64 {
    let rho0 = Vector4::new(c(0.0), c(0.0), c(0.0), c(1.0));
    sz(&((liouvillian(p) * c(t)).exp() * rho0))
}

pub fn null_space_sz(p: &LindbladParams) -> f64 {
    let mut a = liouvillian(p);
    // replace one equation with the trace condition
    a.set_row(0, &nalgebra::RowVector4::new(c(1.0), c(0.0), c(0.0), c(1.0)));
    let b = Vector4::new(c(1.0), c(0.0), c(0.0), c(0.0));
    sz(&a.lu().solve(&b).expect("unique steady state"))
}
