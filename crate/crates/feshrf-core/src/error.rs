//! Error types shared by the physics and numerics modules.

use alloc::boxed::Box;
use thiserror::Error;

/// Errors from domain validation and numerical evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input violated a physical-domain precondition.
    #[error("domain error: {0}")]
    Domain(&'static str),

    /// Magnetic field exactly on the resonance pole B₀.
    #[error("magnetic field is on the resonance pole B0; scattering length diverges")]
    OnResonancePole,

    /// The scattering length is non-positive; no Feshbach molecule exists
    /// at this field under the universal binding-energy relation.
    #[error("no bound state: scattering length {a_m:e} m is not positive")]
    NoBoundState { a_m: f64 },

    /// Adaptive quadrature failed to reach the requested tolerance.
    #[error(
        "quadrature did not converge: achieved relative error {achieved:e} \
         (requested {requested:e}), estimate {estimate:e}"
    )]
    QuadratureNonConvergence {
        achieved: f64,
        requested: f64,
        estimate: f64,
    },

    /// A per-point numerical failure inside a grid evaluation.
    #[error("numerical failure at grid index {index}: {source}")]
    AtGridIndex {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Too few samples or data points for a statistical operation.
    #[error("too few {what}: need at least {needed}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },
}

pub type Result<T> = core::result::Result<T, Error>;
