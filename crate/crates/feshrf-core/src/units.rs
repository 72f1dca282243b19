//! Conversions between laboratory units and internal SI.
//!
//! Only the units the tool actually meets at its boundaries are supported;
//! this is not a general units framework. Temperature converts to kelvin
//! here; temperature-to-energy goes through [`thermal_energy`].

use crate::constants::{K_B, MU_B};
use crate::error::{Error, Result};

/// Laboratory units accepted at I/O boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    /// Magnetic field, gauss (1 G = 1e-4 T).
    Gauss,
    /// Magnetic field, milligauss.
    MilliGauss,
    /// Temperature, nanokelvin.
    NanoKelvin,
    /// Temperature, microkelvin.
    MicroKelvin,
    /// Frequency, hertz.
    Hertz,
    /// Frequency, kilohertz.
    KiloHertz,
    /// Length, nanometre.
    NanoMeter,
    /// Time, microsecond.
    MicroSecond,
    /// Mass, unified atomic mass unit.
    Amu,
    /// Magnetic moment, Bohr magnetons.
    BohrMagneton,
}

impl Unit {
    /// SI value of one of this unit.
    pub fn si_factor(self) -> f64 {
        match self {
            Unit::Gauss => 1e-4,
            Unit::MilliGauss => 1e-7,
            Unit::NanoKelvin => 1e-9,
            Unit::MicroKelvin => 1e-6,
            Unit::Hertz => 1.0,
            Unit::KiloHertz => 1e3,
            Unit::NanoMeter => 1e-9,
            Unit::MicroSecond => 1e-6,
            Unit::Amu => crate::constants::AMU,
            Unit::BohrMagneton => MU_B,
        }
    }

    /// Parse a unit symbol as it appears in configuration files.
    pub fn from_symbol(s: &str) -> Result<Self> {
        Ok(match s {
            "G" => Unit::Gauss,
            "mG" => Unit::MilliGauss,
            "nK" => Unit::NanoKelvin,
            "uK" | "µK" => Unit::MicroKelvin,
            "Hz" => Unit::Hertz,
            "kHz" => Unit::KiloHertz,
            "nm" => Unit::NanoMeter,
            "us" | "µs" => Unit::MicroSecond,
            "amu" | "u" => Unit::Amu,
            "mu_B" | "µ_B" => Unit::BohrMagneton,
            _ => return Err(Error::Domain("unknown unit symbol")),
        })
    }
}

/// Convert a laboratory-unit value to SI.
pub fn to_si(value: f64, unit: Unit) -> f64 {
    value * unit.si_factor()
}

/// Convert an SI value to the given laboratory unit.
pub fn from_si(value: f64, unit: Unit) -> f64 {
    value / unit.si_factor()
}

/// Thermal energy k_B·T (J) for T > 0.
pub fn thermal_energy(temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::Domain("temperature must be positive"));
    }
    Ok(K_B * temperature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_to_tesla() {
        assert_relative_eq!(to_si(545.994, Unit::Gauss), 0.0545994, max_relative = 1e-15);
    }

    #[test]
    fn nanokelvin() {
        assert_eq!(to_si(730.0, Unit::NanoKelvin), 7.30e-7);
    }

    #[test]
    fn bohr_magneton_multiple() {
        // 2.32 µ_B, the magnetic-moment difference of the working channel
        assert_relative_eq!(to_si(2.32, Unit::BohrMagneton), 2.1516e-23, max_relative = 1e-4);
    }

    #[test]
    fn thermal_energy_values() {
        assert_relative_eq!(thermal_energy(7.30e-7).unwrap(), 1.00787e-29, max_relative = 1e-5);
        assert_relative_eq!(thermal_energy(1.1e-6).unwrap(), 1.5187e-29, max_relative = 1e-4);
        // 0+ limit
        assert!(thermal_energy(1e-300).unwrap() < 1e-320_f64.max(f64::MIN_POSITIVE) * 1e300);
        assert!(thermal_energy(0.0).is_err());
        assert!(thermal_energy(-1.0).is_err());
        assert!(thermal_energy(f64::NAN).is_err());
    }

    #[test]
    fn round_trip_identity() {
        let units = [
            Unit::Gauss,
            Unit::MilliGauss,
            Unit::NanoKelvin,
            Unit::MicroKelvin,
            Unit::Hertz,
            Unit::KiloHertz,
            Unit::NanoMeter,
            Unit::MicroSecond,
            Unit::Amu,
            Unit::BohrMagneton,
        ];
        for u in units {
            for v in [1.0, 545.994, 3.7e-5, 8.1e7] {
                assert_relative_eq!(from_si(to_si(v, u), u), v, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn symbol_parsing() {
        assert_eq!(Unit::from_symbol("G").unwrap(), Unit::Gauss);
        assert_eq!(Unit::from_symbol("µs").unwrap(), Unit::MicroSecond);
        assert!(Unit::from_symbol("furlong").is_err());
    }
}
