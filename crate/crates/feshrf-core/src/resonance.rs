//! Magnetic-field-dependent scattering length, universal binding energy,
//! closed-channel admixture and the closed-form Franck–Condon factor.
//!
//! Wavenumber convention, used everywhere in this module: the bound-state
//! wavenumber is k = √(2µE_b)/ħ = 1/a, the inverse of the scattering
//! length. The admixture χ is computed from its defining relation
//! χ = 1 − |∂E_b/∂B|/Δµ with the analytic derivative of
//! E_b(B) = ħ²/(2µ a(B)²); magnitudes are used so that sign conventions
//! for ΔB and Δµ cannot push the channel fraction out of [0, 1] by
//! construction. An alternative closed form quadratic in k·a_bg is kept
//! only as a diagnostic (see [`closed_channel_factor_k2_form`]): it is
//! dimensionally inconsistent as written and is not used by the model.

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::constants::HBAR;
use crate::error::{Error, Result};
use crate::species::SpeciesPair;
use crate::trap::EffectiveTrap;

/// Feshbach resonance parameters of the working entrance channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceParams {
    /// Background scattering length a_bg (m), nonzero.
    pub a_bg: f64,
    /// Resonance position B₀ (T).
    pub b0: f64,
    /// Resonance width ΔB (T), signed, nonzero.
    pub delta_b: f64,
    /// Difference of molecular and atomic magnetic moments Δµ (J/T), nonzero.
    pub delta_mu: f64,
    /// Pair scattering length a′ (m) probed by the association, positive.
    pub a_prime: f64,
    pub pair: SpeciesPair,
}

impl ResonanceParams {
    pub fn new(
        a_bg: f64,
        b0: f64,
        delta_b: f64,
        delta_mu: f64,
        a_prime: f64,
        pair: SpeciesPair,
    ) -> Result<Self> {
        if !(a_bg != 0.0 && a_bg.is_finite()) {
            return Err(Error::Domain("background scattering length must be nonzero"));
        }
        if !(delta_b != 0.0 && delta_b.is_finite()) {
            return Err(Error::Domain("resonance width must be nonzero"));
        }
        if !(delta_mu != 0.0 && delta_mu.is_finite()) {
            return Err(Error::Domain("magnetic moment difference must be nonzero"));
        }
        if !(a_prime > 0.0) {
            return Err(Error::Domain("pair scattering length must be positive"));
        }
        if !b0.is_finite() {
            return Err(Error::Domain("resonance position must be finite"));
        }
        Ok(Self {
            a_bg,
            b0,
            delta_b,
            delta_mu,
            a_prime,
            pair,
        })
    }

    /// Coupled-channel values for the ⁴⁰K–⁸⁷Rb resonance near 546.6 G:
    /// a_bg = 9.88 nm, B₀ = 546.618 G, ΔB = 3.04 G, Δµ = 2.32 µ_B,
    /// a′ = 9.10 nm.
    pub fn k40_rb87_default() -> Self {
        Self::new(
            9.88e-9,
            546.618e-4,
            3.04e-4,
            2.32 * crate::constants::MU_B,
            9.10e-9,
            SpeciesPair::potassium40_rubidium87(),
        )
        .expect("reference parameters are valid")
    }
}

/// Scattering length a(B) = a_bg·(1 − ΔB/(B − B₀)).
///
/// May legitimately be negative or zero; B = B₀ is the pole.
pub fn scattering_length(b: f64, params: &ResonanceParams) -> Result<f64> {
    let det = b - params.b0;
    if det == 0.0 {
        return Err(Error::OnResonancePole);
    }
    Ok(params.a_bg * (1.0 - params.delta_b / det))
}

/// Universal binding energy E_b = ħ²/(2µa²) of the weakly bound level.
pub fn binding_energy_from_length(a: f64, pair: &SpeciesPair) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::NoBoundState { a_m: a });
    }
    Ok(HBAR * HBAR / (2.0 * pair.reduced_mass * a * a))
}

/// Inverse of [`binding_energy_from_length`]: a = ħ/√(2µE_b).
pub fn length_from_binding_energy(e_b: f64, pair: &SpeciesPair) -> Result<f64> {
    if !(e_b > 0.0) {
        return Err(Error::Domain("binding energy must be positive"));
    }
    Ok(HBAR / (2.0 * pair.reduced_mass * e_b).sqrt())
}

/// Binding energy at magnetic field B through the field-dependent
/// scattering length.
pub fn binding_energy_from_field(b: f64, params: &ResonanceParams) -> Result<f64> {
    let a = scattering_length(b, params)?;
    binding_energy_from_length(a, &params.pair)
}

/// Field at which the bound level has binding energy E_b, on the branch
/// containing the given scattering length: B = B₀ + ΔB·a_bg/(a_bg − a).
pub fn field_from_binding_energy(e_b: f64, params: &ResonanceParams) -> Result<f64> {
    let a = length_from_binding_energy(e_b, &params.pair)?;
    if a == params.a_bg {
        return Err(Error::Domain(
            "binding energy corresponds to the background length; field unbounded",
        ));
    }
    Ok(params.b0 + params.delta_b * params.a_bg / (params.a_bg - a))
}

/// Analytic field derivative of the binding energy,
/// dE_b/dB = −(ħ²/(µa³))·a_bg·ΔB/(B − B₀)².
pub fn d_binding_energy_db(b: f64, params: &ResonanceParams) -> Result<f64> {
    let a = scattering_length(b, params)?;
    if !(a > 0.0) {
        return Err(Error::NoBoundState { a_m: a });
    }
    let det = b - params.b0;
    Ok(-(HBAR * HBAR / (params.pair.reduced_mass * a.powi(3)))
        * (params.a_bg * params.delta_b / (det * det)))
}

/// Closed-channel admixture with its pre-clamp value retained for
/// diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedChannelFraction {
    /// χ clamped to [0, 1].
    pub value: f64,
    /// χ before clamping; outside [0, 1] the approximation has left its
    /// validity range.
    pub raw: f64,
}

impl ClosedChannelFraction {
    fn from_raw(raw: f64) -> Self {
        Self {
            value: raw.clamp(0.0, 1.0),
            raw,
        }
    }

    /// True when the raw value fell outside [0, 1].
    pub fn was_clamped(&self) -> bool {
        self.value != self.raw
    }
}

/// Open-channel fraction χ = 1 − |dE_b/dB|/Δµ at field B, from the
/// analytic derivative. χ → 1 in the universal limit E_b → 0.
pub fn closed_channel_factor(b: f64, params: &ResonanceParams) -> Result<ClosedChannelFraction> {
    let deriv = d_binding_energy_db(b, params)?;
    Ok(ClosedChannelFraction::from_raw(
        1.0 - deriv.abs() / params.delta_mu.abs(),
    ))
}

/// χ expressed through the bound-state wavenumber alone:
/// |dE_b/dB| = ħ²k(1 − k·a_bg)²/(µ·|ΔB|·|a_bg|).
///
/// Algebraically identical to [`closed_channel_factor`] under
/// B ↔ E_b mapping on a fixed branch; used where only E_b is known.
pub fn closed_channel_factor_from_binding_energy(
    e_b: f64,
    params: &ResonanceParams,
) -> Result<ClosedChannelFraction> {
    let a = length_from_binding_energy(e_b, &params.pair)?;
    let k = 1.0 / a;
    let deriv_mag = HBAR * HBAR * k * (1.0 - k * params.a_bg).powi(2)
        / (params.pair.reduced_mass * params.delta_b.abs() * params.a_bg.abs());
    Ok(ClosedChannelFraction::from_raw(
        1.0 - deriv_mag / params.delta_mu.abs(),
    ))
}

/// Diagnostic only: the alternative closed form
/// χ = 1 − ħ²k²·(1 + k·a_bg)²/(Δµ·ΔB·µ·a_bg), evaluated literally in SI.
///
/// This expression carries a leftover 1/length dimension and can exceed 1;
/// it is retained solely for comparison against the derivative-based χ and
/// must not feed the model.
pub fn closed_channel_factor_k2_form(e_b: f64, params: &ResonanceParams) -> Result<f64> {
    let a = length_from_binding_energy(e_b, &params.pair)?;
    let k = 1.0 / a;
    Ok(1.0
        - HBAR * HBAR * k * k * (1.0 + k * params.a_bg).powi(2)
            / (params.delta_mu * params.delta_b * params.pair.reduced_mass * params.a_bg))
}

/// Bound-state quantities entering the Franck–Condon factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundStateInfo {
    /// Binding energy E_b (J), positive.
    pub e_b: f64,
    /// Pair-length energy scale E_b′ = ħ²/(2µa′²) (J).
    pub e_b_prime: f64,
    /// Scattering length a (m) at the working field.
    pub a: f64,
    /// Pair scattering length a′ (m).
    pub a_prime: f64,
    /// Bound-state wavenumber k = √(2µE_b)/ħ = 1/a (1/m).
    pub k: f64,
    /// Open-channel fraction χ, clamped to [0, 1].
    pub chi: f64,
    /// χ before clamping (diagnostic).
    pub chi_raw: f64,
}

impl BoundStateInfo {
    /// Build from the magnetic field through the resonance parameters.
    pub fn from_field(b: f64, params: &ResonanceParams) -> Result<Self> {
        let a = scattering_length(b, params)?;
        let e_b = binding_energy_from_length(a, &params.pair)?;
        let chi = closed_channel_factor(b, params)?;
        Ok(Self {
            e_b,
            e_b_prime: binding_energy_from_length(params.a_prime, &params.pair)?,
            a,
            a_prime: params.a_prime,
            k: 1.0 / a,
            chi: chi.value,
            chi_raw: chi.raw,
        })
    }

    /// Build from a known binding energy; the field is implied by the
    /// resonance parameters. Used by spectrum fitting, where E_b is the
    /// free parameter.
    pub fn from_binding_energy(e_b: f64, params: &ResonanceParams) -> Result<Self> {
        let a = length_from_binding_energy(e_b, &params.pair)?;
        let chi = closed_channel_factor_from_binding_energy(e_b, params)?;
        Ok(Self {
            e_b,
            e_b_prime: binding_energy_from_length(params.a_prime, &params.pair)?,
            a,
            a_prime: params.a_prime,
            k: 1.0 / a,
            chi: chi.value,
            chi_raw: chi.raw,
        })
    }
}

/// Franck–Condon factor per relative collision energy,
/// F_f(ε_r) = ħω̃·χ·(2/π)·(1 − a′/a)²·√ε_r·√E_b·E_b′ /
/// ((ε_r+E_b)²·(ε_r+E_b′)), dimensionless.
pub fn franck_condon(eps_r: f64, bound: &BoundStateInfo, trap: &EffectiveTrap) -> Result<f64> {
    if !(eps_r >= 0.0) {
        return Err(Error::Domain("collision energy must be non-negative"));
    }
    let shape = eps_r.sqrt() * bound.e_b.sqrt() * bound.e_b_prime
        / ((eps_r + bound.e_b).powi(2) * (eps_r + bound.e_b_prime));
    Ok(HBAR * trap.omega_tilde
        * bound.chi
        * core::f64::consts::FRAC_2_PI
        * (1.0 - bound.a_prime / bound.a).powi(2)
        * shape)
}
