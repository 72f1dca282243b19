//! Two-species mass bookkeeping.

use alloc::string::String;

use crate::constants::AMU;
use crate::error::{Error, Result};

/// Reduced mass m_a·m_b/(m_a + m_b) of a two-body system.
pub fn reduced_mass(mass_a: f64, mass_b: f64) -> Result<f64> {
    if !(mass_a > 0.0 && mass_b > 0.0) {
        return Err(Error::Domain("masses must be positive"));
    }
    Ok(mass_a * mass_b / (mass_a + mass_b))
}

/// The two atomic species of the mixture with their derived two-body masses.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesPair {
    /// Mass of species a (kg).
    pub mass_a: f64,
    /// Mass of species b (kg).
    pub mass_b: f64,
    /// Reduced mass µ = m_a·m_b/(m_a+m_b) (kg).
    pub reduced_mass: f64,
    /// Total mass M = m_a + m_b (kg).
    pub total_mass: f64,
    pub label_a: String,
    pub label_b: String,
}

impl SpeciesPair {
    pub fn new(label_a: &str, mass_a: f64, label_b: &str, mass_b: f64) -> Result<Self> {
        let mu = reduced_mass(mass_a, mass_b)?;
        Ok(Self {
            mass_a,
            mass_b,
            reduced_mass: mu,
            total_mass: mass_a + mass_b,
            label_a: String::from(label_a),
            label_b: String::from(label_b),
        })
    }

    /// The ⁴⁰K–⁸⁷Rb pair of the reference experiment (isotope-table masses).
    pub fn potassium40_rubidium87() -> Self {
        Self::new("K40", 39.9639985 * AMU, "Rb87", 86.9091805 * AMU)
            .expect("isotope masses are positive")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn equal_masses_halve() {
        let m = 3.5e-26;
        assert_relative_eq!(reduced_mass(m, m).unwrap(), m / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn k40_rb87_reduced_mass() {
        let pair = SpeciesPair::potassium40_rubidium87();
        assert_relative_eq!(pair.reduced_mass / AMU, 27.376, max_relative = 4e-5);
        assert!(pair.reduced_mass > 0.0 && pair.reduced_mass < pair.mass_a.min(pair.mass_b));
        assert_relative_eq!(
            pair.total_mass,
            pair.mass_a + pair.mass_b,
            max_relative = 1e-15
        );
    }

    #[test]
    fn heavy_partner_limit() {
        // m_b >> m_a: reduced mass approaches m_a
        let m_a = 1.0e-26;
        let mu = reduced_mass(m_a, 1.0e-16).unwrap();
        assert_relative_eq!(mu, m_a, max_relative = 1e-9);
    }

    #[test]
    fn symmetry() {
        let (x, y) = (4.2e-26, 1.37e-25);
        assert_eq!(reduced_mass(x, y).unwrap(), reduced_mass(y, x).unwrap());
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(reduced_mass(0.0, 1.0).is_err());
        assert!(reduced_mass(1.0, -2.0).is_err());
        assert!(SpeciesPair::new("x", f64::NAN, "y", 1.0).is_err());
    }
}
