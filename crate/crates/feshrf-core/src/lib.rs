//! Analytical model for radio-frequency association of heteronuclear
//! Feshbach molecules in a harmonic trap.
//!
//! The crate computes absolute association spectra N_mol(ν) for a trapped
//! thermal two-species mixture, fits measured spectra for the molecular
//! binding energy and an overall scale factor, and characterizes a Feshbach
//! resonance (position B₀, width ΔB) from binding-energy-vs-field data.
//! A Monte Carlo phase-space sampler and an independent reference
//! quadrature provide self-validation of the pair statistics and of the
//! spectrum integral.
//!
//! All quantities are strict SI internally (J, s, T, kg, m, rad/s);
//! laboratory units (G, nK, kHz, nm, µs) exist only at I/O boundaries,
//! see [`units`].
//!
//! The crate is `no_std`-compatible (`default-features = false`); it
//! requires `alloc`.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
// validation guards are written `!(x > 0.0)` so that NaN is rejected along
// with the wrong sign; the clippy-suggested `x <= 0.0` would accept NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod constants;
pub mod error;
pub mod fit;
pub mod oracle;
pub mod quadrature;
pub mod resonance;
pub mod species;
pub mod spectrum;
pub mod trap;
pub mod units;

pub use error::Error;
pub use resonance::{BoundStateInfo, ResonanceParams};
pub use species::SpeciesPair;
pub use spectrum::{ModelConfig, PulseParams, Spectrum, SpectrumPoint};
pub use trap::{EffectiveTrap, MixtureState, TrapConfig};
