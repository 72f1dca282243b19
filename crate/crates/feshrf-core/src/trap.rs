//! Harmonic-trap pair statistics for a thermal two-species mixture.
//!
//! The two-atom Hamiltonian separates into relative and center-of-mass
//! oscillators with per-axis mean frequencies ω̄_i = √(ω_a,i·ω_b,i); the
//! small residual coupling between the two (present when the species see
//! different frequencies) is dropped throughout. Energies are treated as
//! continuous: for all conditions of interest ħω̃/k_BT ≈ 0.02, so discrete
//! oscillator levels never matter.

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::constants::HBAR;
use crate::error::{Error, Result};
use crate::units::thermal_energy;

/// Per-axis angular trap frequencies (rad/s) seen by each species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapConfig {
    pub omega_a: [f64; 3],
    pub omega_b: [f64; 3],
}

impl TrapConfig {
    pub fn new(omega_a: [f64; 3], omega_b: [f64; 3]) -> Result<Self> {
        for w in omega_a.iter().chain(omega_b.iter()) {
            if !(*w > 0.0) {
                return Err(Error::Domain("trap frequencies must be positive"));
            }
        }
        Ok(Self { omega_a, omega_b })
    }

    /// Both species isotropic at the given angular frequencies.
    pub fn isotropic(omega_a: f64, omega_b: f64) -> Result<Self> {
        Self::new([omega_a; 3], [omega_b; 3])
    }

    /// Per-axis relative frequency mismatch (ω_a,i − ω_b,i)/ω̄_i.
    ///
    /// Diagnostic for the size of the neglected relative/center-of-mass
    /// coupling, which vanishes with this ratio.
    pub fn mismatch_ratios(&self) -> [f64; 3] {
        let mut r = [0.0; 3];
        for (i, ratio) in r.iter_mut().enumerate() {
            let bar = (self.omega_a[i] * self.omega_b[i]).sqrt();
            *ratio = (self.omega_a[i] - self.omega_b[i]) / bar;
        }
        r
    }
}

/// Effective trap of the separated pair Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveTrap {
    /// Per-axis mean frequencies ω̄_i = √(ω_a,i·ω_b,i) (rad/s).
    pub omega_bar: [f64; 3],
    /// Geometric mean ω̃ = (ω̄₁ω̄₂ω̄₃)^{1/3} (rad/s).
    pub omega_tilde: f64,
}

impl EffectiveTrap {
    /// Isotropic effective trap, ω̄_i = ω̃ = ω.
    pub fn isotropic(omega: f64) -> Result<Self> {
        if !(omega > 0.0) {
            return Err(Error::Domain("trap frequencies must be positive"));
        }
        Ok(Self {
            omega_bar: [omega; 3],
            omega_tilde: omega,
        })
    }
}

/// Build the effective relative/center-of-mass trap from the per-species
/// configuration.
pub fn effective_trap(cfg: &TrapConfig) -> EffectiveTrap {
    let mut bar = [0.0; 3];
    for (i, b) in bar.iter_mut().enumerate() {
        *b = (cfg.omega_a[i] * cfg.omega_b[i]).sqrt();
    }
    EffectiveTrap {
        omega_bar: bar,
        omega_tilde: (bar[0] * bar[1] * bar[2]).powf(1.0 / 3.0),
    }
}

/// Atom numbers and temperature of the mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureState {
    pub n_a: f64,
    pub n_b: f64,
    /// Temperature (K).
    pub temperature: f64,
}

impl MixtureState {
    pub fn new(n_a: f64, n_b: f64, temperature: f64) -> Result<Self> {
        if !(n_a >= 0.0 && n_b >= 0.0) {
            return Err(Error::Domain("atom numbers must be non-negative"));
        }
        if !(temperature > 0.0) {
            return Err(Error::Domain("temperature must be positive"));
        }
        Ok(Self {
            n_a,
            n_b,
            temperature,
        })
    }
}

/// Maxwell-Boltzmann occupation per state at energy ε for N atoms in a
/// 3D harmonic oscillator: f(ε) = N·(ħ³ω₁ω₂ω₃/(k_BT)³)·exp(−ε/k_BT).
pub fn single_atom_occupation(
    eps: f64,
    n: f64,
    omegas: &[f64; 3],
    temperature: f64,
) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(Error::Domain("energy must be non-negative"));
    }
    let kt = thermal_energy(temperature)?;
    let level_volume = HBAR.powi(3) * omegas[0] * omegas[1] * omegas[2];
    Ok(n * level_volume / kt.powi(3) * (-eps / kt).exp())
}

/// Pair occupation per state at total pair energy ε_t:
/// f_p(ε_t) = N_a·N_b·(ħω̃/k_BT)⁶·exp(−ε_t/k_BT), the product of the two
/// single-atom occupation densities.
pub fn pair_occupation(eps_t: f64, mix: &MixtureState, trap: &EffectiveTrap) -> Result<f64> {
    if !(eps_t >= 0.0) {
        return Err(Error::Domain("energy must be non-negative"));
    }
    let kt = thermal_energy(mix.temperature)?;
    let x = HBAR * trap.omega_tilde / kt;
    Ok(mix.n_a * mix.n_b * x.powi(6) * (-eps_t / kt).exp())
}

/// Density of states of the center-of-mass oscillator,
/// g_cm(ε_cm) = ε_cm²/(2(ħω̃)³) (states per J).
pub fn dos_center_of_mass(eps_cm: f64, trap: &EffectiveTrap) -> Result<f64> {
    if !(eps_cm >= 0.0) {
        return Err(Error::Domain("energy must be non-negative"));
    }
    let hw = HBAR * trap.omega_tilde;
    Ok(eps_cm * eps_cm / (2.0 * hw.powi(3)))
}

/// Density of s-wave states per relative kinetic energy,
/// g_r = 1/(2ħω̃), independent of ε_r.
pub fn dos_swave(trap: &EffectiveTrap) -> f64 {
    1.0 / (2.0 * HBAR * trap.omega_tilde)
}

/// Colliding-pair density per relative-motion energy,
/// h(ε_r) = N_a·N_b·(ħω̃)²/(2(k_BT)³)·exp(−ε_r/k_BT) (pairs per J).
///
/// Equals ∫₀^∞ g_cm(ε_cm)·g_r·f_p(ε_r+ε_cm) dε_cm in closed form.
pub fn pair_energy_density(eps_r: f64, mix: &MixtureState, trap: &EffectiveTrap) -> Result<f64> {
    if !(eps_r >= 0.0) {
        return Err(Error::Domain("energy must be non-negative"));
    }
    let kt = thermal_energy(mix.temperature)?;
    let hw = HBAR * trap.omega_tilde;
    Ok(mix.n_a * mix.n_b * hw * hw / (2.0 * kt.powi(3)) * (-eps_r / kt).exp())
}
