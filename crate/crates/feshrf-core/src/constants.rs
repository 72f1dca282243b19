//! Physical constants, CODATA 2018 (SI).
//!
//! Frozen here in one place so golden values stay reproducible. ℏ is
//! derived from the exact Planck constant so that h = 2πℏ holds to the
//! last bit.

use core::f64::consts::TAU;

/// Planck constant h (J·s), exact by SI definition.
pub const PLANCK_H: f64 = 6.62607015e-34;

/// Reduced Planck constant ℏ = h/2π (J·s).
pub const HBAR: f64 = PLANCK_H / TAU;

/// Boltzmann constant k_B (J/K), exact by SI definition.
pub const K_B: f64 = 1.380649e-23;

/// Bohr magneton µ_B (J/T).
pub const MU_B: f64 = 9.2740100783e-24;

/// Unified atomic mass unit (kg).
pub const AMU: f64 = 1.66053906660e-27;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planck_relation_exact() {
        assert_eq!(PLANCK_H.to_bits(), (HBAR * TAU).to_bits());
    }

    #[test]
    fn all_positive() {
        for c in [PLANCK_H, HBAR, K_B, MU_B, AMU] {
            assert!(c > 0.0);
        }
    }

    #[test]
    fn spot_values() {
        // CODATA 2018: ℏ = 1.054571817e-34 J·s
        assert!((HBAR - 1.054571817e-34).abs() / HBAR < 1e-9);
        assert!((MU_B - 9.2740100783e-24).abs() == 0.0);
    }
}
