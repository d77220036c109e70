//! Simulation and analysis primitives for optically detected NV-centre RF magnetometry
//! with optically active spin qubits.
//!
//! A target field `b(t)` ([`signals`]) shifts the ODMR resonance of an NV
//! center driven at a fixed microwave frequency ([`nvmodel`]); the resulting
//! fluorescence rate is sampled as a shot-noise-limited photon stream
//! ([`photonsim`]), binned and Fourier transformed ([`spectral`]), optionally
//! phase-corrected against a bichromatic reference ([`phaselock`]) and fitted
//! ([`fitkit`]). [`lindblad`] integrates the two-level master equation used to
//! study the detection bandwidth.
//!
//! The crate is `no_std` and needs only `alloc`. Discrete Fourier transforms
//! are injected through [`spectral::RealDft`]; [`spectral::NaiveDft`] is a
//! slow reference implementation, and the `fenc` crate provides an FFT-backed
//! one.

#![no_std]
// float methods resolve to std inherents whenever std is linked into the
// build, leaving the `Float` imports unused
#![allow(unused_imports)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod fitkit;
pub mod lindblad;
pub mod nvmodel;
pub mod phaselock;
pub mod photonsim;
pub mod signals;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};

/// 64-bit FNV-1a digest, used to tag streams with the configuration that produced them.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
