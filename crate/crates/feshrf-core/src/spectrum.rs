//! Evaluation of the association spectrum: molecule number versus radio
//! frequency by quadrature over the relative collision energy.
//!
//! N_mol(ν) = λ·(π/2)·Ω²τ²·∫₀^∞ h(ε_r)·exp(−(hν − E₀ − E_b − ε_r)²τ²/ħ²)
//! ·F_f(ε_r) dε_r.
//!
//! The integrand is a Gaussian of width ħ/τ riding on the thermally
//! decaying pair density; the integration domain is assembled from panels
//! split at the Gaussian center and its ±8ħ/τ wings so the adaptive rule
//! cannot step over the peak when ħ/τ ≪ k_BT.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::constants::{HBAR, PLANCK_H};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_kronrod, fixed_kronrod, QuadratureConfig};
use crate::resonance::{franck_condon, BoundStateInfo};
use crate::trap::{pair_energy_density, EffectiveTrap, MixtureState};
use crate::units::thermal_energy;

/// Radio-frequency pulse parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseParams {
    /// Peak atomic Rabi frequency Ω (rad/s), non-negative.
    pub rabi: f64,
    /// Gaussian pulse duration τ (s), positive.
    pub tau: f64,
    /// Atomic transition energy E₀ (J); the atomic line sits at ν₀ = E₀/h.
    pub e0: f64,
}

impl PulseParams {
    pub fn new(rabi: f64, tau: f64, e0: f64) -> Result<Self> {
        if !(rabi >= 0.0) {
            return Err(Error::Domain("Rabi frequency must be non-negative"));
        }
        if !(tau > 0.0) {
            return Err(Error::Domain("pulse duration must be positive"));
        }
        Ok(Self { rabi, tau, e0 })
    }

    /// Atomic line frequency ν₀ = E₀/h (Hz).
    pub fn atomic_line(&self) -> f64 {
        self.e0 / PLANCK_H
    }
}

/// How the spectrum integral is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadratureMethod {
    /// Globally adaptive Gauss–Kronrod (default).
    Adaptive,
    /// Non-adaptive composite rule with the given subdivisions per panel;
    /// reproducibility fallback.
    FixedPanels(usize),
}

/// Everything needed to evaluate the model spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub mix: MixtureState,
    pub trap: EffectiveTrap,
    pub pulse: PulseParams,
    pub bound: BoundStateInfo,
    /// Overall scale factor λ ≥ 0 (1 = bare model).
    pub lambda: f64,
    pub quad: QuadratureConfig,
    pub method: QuadratureMethod,
}

impl ModelConfig {
    pub fn new(
        mix: MixtureState,
        trap: EffectiveTrap,
        pulse: PulseParams,
        bound: BoundStateInfo,
        lambda: f64,
    ) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::Domain("scale factor must be non-negative"));
        }
        Ok(Self {
            mix,
            trap,
            pulse,
            bound,
            lambda,
            quad: QuadratureConfig::default(),
            method: QuadratureMethod::Adaptive,
        })
    }

    fn rabi_squared_tau_squared(&self) -> f64 {
        let ot = self.pulse.rabi * self.pulse.tau;
        ot * ot
    }
}

/// One spectrum sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    /// Radio frequency ν (Hz).
    pub frequency: f64,
    pub molecule_number: f64,
    /// Measurement uncertainty (1σ) when known.
    pub uncertainty: Option<f64>,
}

/// Frequency-ordered spectrum (model output or measured data).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    points: Vec<SpectrumPoint>,
}

impl Spectrum {
    /// Frequencies must be strictly increasing.
    pub fn new(points: Vec<SpectrumPoint>) -> Result<Self> {
        for w in points.windows(2) {
            if !(w[1].frequency > w[0].frequency) {
                return Err(Error::Domain("frequencies must be strictly increasing"));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[SpectrumPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and point of the maximum molecule number.
    pub fn peak(&self) -> Option<(usize, &SpectrumPoint)> {
        self.points
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.molecule_number.total_cmp(&b.1.molecule_number))
    }
}

/// The ε_r = 0 association threshold ν₀ + E_b/h (Hz).
pub fn spectral_edge(cfg: &ModelConfig) -> f64 {
    (cfg.pulse.e0 + cfg.bound.e_b) / PLANCK_H
}

/// Integration panels for one frequency: Gaussian window around the
/// detuning δ plus the thermal envelope support, clipped to ε ≥ 0.
fn integration_panels(delta: f64, width: f64, kt: f64) -> Vec<(f64, f64)> {
    let hi = (30.0 * kt).max(delta + width);
    let mut cuts = [
        0.0,
        (delta - width).max(0.0),
        delta.max(0.0),
        (delta + width).clamp(0.0, hi),
        hi,
    ];
    cuts.sort_unstable_by(f64::total_cmp);
    let mut panels = Vec::with_capacity(4);
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            panels.push((w[0], w[1]));
        }
    }
    panels
}

/// Number of molecules produced by a pulse at radio frequency `nu` (Hz).
pub fn molecule_number(nu: f64, cfg: &ModelConfig) -> Result<f64> {
    let prefactor =
        cfg.lambda * FRAC_PI_2 * cfg.rabi_squared_tau_squared();
    if prefactor == 0.0 {
        return Ok(0.0);
    }
    let kt = thermal_energy(cfg.mix.temperature)?;
    let delta = PLANCK_H * nu - cfg.pulse.e0 - cfg.bound.e_b;
    let width = 8.0 * HBAR / cfg.pulse.tau;
    let panels = integration_panels(delta, width, kt);

    let tau_over_hbar = cfg.pulse.tau / HBAR;
    let mix = cfg.mix;
    let trap = cfg.trap;
    let bound = cfg.bound;
    let integrand = move |eps: f64| {
        let g = -(delta - eps) * (delta - eps) * tau_over_hbar * tau_over_hbar;
        pair_energy_density(eps, &mix, &trap).expect("eps >= 0 by construction")
            * g.exp()
            * franck_condon(eps, &bound, &trap).expect("eps >= 0 by construction")
    };

    let integral = match cfg.method {
        QuadratureMethod::Adaptive => adaptive_kronrod(&integrand, &panels, &cfg.quad)?.value,
        QuadratureMethod::FixedPanels(n) => fixed_kronrod(&integrand, &panels, n).value,
    };
    Ok(prefactor * integral)
}


/// Model spectrum over a strictly increasing frequency grid.
///
/// Points are independent; any failure is reported with its grid index.
pub fn compute_spectrum(grid: &[f64], cfg: &ModelConfig) -> Result<Spectrum> {
    if grid.is_empty() {
        return Err(Error::Domain("frequency grid must be non-empty"));
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Domain("frequency grid must be strictly increasing"));
        }
    }
    let mut points = Vec::with_capacity(grid.len());
    for (index, &nu) in grid.iter().enumerate() {
        let n = molecule_number(nu, cfg).map_err(|e| Error::AtGridIndex {
            index,
            source: Box::new(e),
        })?;
        points.push(SpectrumPoint {
            frequency: nu,
            molecule_number: n,
            uncertainty: None,
        });
    }
    Spectrum::new(points)
}

/// Largest value of the Franck–Condon factor over collision energy.
///
/// The shape is unimodal with its peak below E_b/3; located by ternary
/// search.
pub fn franck_condon_max(cfg: &ModelConfig) -> f64 {
    let f = |e: f64| franck_condon(e, &cfg.bound, &cfg.trap).expect("non-negative energy");
    let (mut lo, mut hi) = (0.0_f64, cfg.bound.e_b * 0.4);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    f(0.5 * (lo + hi))
}

/// Perturbative-validity metric Ω·√F_f,max·τ.
///
/// The Fermi-golden-rule treatment assumes this stays well below one;
/// [`perturbative_ok`] flags the conventional 0.5 bar.
pub fn perturbativity_metric(cfg: &ModelConfig) -> f64 {
    cfg.pulse.rabi * franck_condon_max(cfg).sqrt() * cfg.pulse.tau
}

/// True when the drive is weak enough for the perturbative lineshape.
pub fn perturbative_ok(cfg: &ModelConfig) -> bool {
    perturbativity_metric(cfg) <= 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::K_B;
    use crate::resonance::ResonanceParams;
    use crate::trap::{effective_trap, TrapConfig};
    use approx::assert_relative_eq;
    use core::f64::consts::TAU;

    pub(crate) fn paper_config() -> ModelConfig {
        let params = ResonanceParams::k40_rb87_default();
        let trap = effective_trap(&TrapConfig::isotropic(TAU * 244.0, TAU * 335.0).unwrap());
        let mix = MixtureState::new(5e5, 2.5e5, 730e-9).unwrap();
        let pulse = PulseParams::new(TAU * 45e3, 25e-6, 8.0e7 * PLANCK_H).unwrap();
        let bound = BoundStateInfo::from_field(545.994e-4, &params).unwrap();
        ModelConfig::new(mix, trap, pulse, bound, 1.0).unwrap()
    }

    #[test]
    fn zero_rabi_zero_everywhere() {
        let mut cfg = paper_config();
        cfg.pulse.rabi = 0.0;
        let nu0 = cfg.pulse.atomic_line();
        for det in [0.0, 30e3, 60e3, 120e3] {
            assert_eq!(molecule_number(nu0 + det, &cfg).unwrap(), 0.0);
        }
    }

    #[test]
    fn gaussian_suppression_at_zero_detuning() {
        // at ν = ν₀ the Gaussian factor is exp(−(E_b·τ/ħ)²) < 1e-30
        let cfg = paper_config();
        let n = molecule_number(cfg.pulse.atomic_line(), &cfg).unwrap();
        assert!((0.0..1e-15).contains(&n), "got {n}");
    }

    #[test]
    fn golden_value_against_reference_quadrature() {
        // ν − ν₀ = E_b/h + k_BT/(2h); value pinned by an independent
        // adaptive integration at relative 1e-11
        let cfg = paper_config();
        let det = cfg.bound.e_b / PLANCK_H + K_B * 730e-9 / (2.0 * PLANCK_H);
        let n = molecule_number(cfg.pulse.atomic_line() + det, &cfg).unwrap();
        assert_relative_eq!(n, 4.3796654253e5, max_relative = 1e-7);
    }

    #[test]
    fn spectral_edge_examples() {
        let mut cfg = paper_config();
        let nu0 = cfg.pulse.atomic_line();
        assert_relative_eq!(
            spectral_edge(&cfg),
            nu0 + 54.8525e3,
            max_relative = 1e-6
        );
        // translation invariance
        cfg.pulse.e0 += 1e6 * PLANCK_H;
        assert_relative_eq!(
            spectral_edge(&cfg),
            nu0 + 1e6 + 54.8525e3,
            max_relative = 1e-9
        );
    }

    #[test]
    fn single_point_grid_matches_pointwise() {
        let cfg = paper_config();
        let nu = spectral_edge(&cfg) + 10e3;
        let s = compute_spectrum(&[nu], &cfg).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(
            s.points()[0].molecule_number,
            molecule_number(nu, &cfg).unwrap()
        );
    }

    #[test]
    fn peak_sits_above_edge() {
        let cfg = paper_config();
        let edge = spectral_edge(&cfg);
        let kt_hz = K_B * 730e-9 / PLANCK_H;
        let grid: Vec<f64> = (0..400)
            .map(|i| edge - 2.0 * kt_hz + i as f64 * 0.02 * kt_hz)
            .collect();
        let s = compute_spectrum(&grid, &cfg).unwrap();
        let (_, pk) = s.peak().unwrap();
        assert!(pk.frequency > edge, "thermal shift must push the peak up");
        // all non-negative
        assert!(s.points().iter().all(|p| p.molecule_number >= 0.0));
    }

    #[test]
    fn lambda_linearity_exact() {
        let cfg = paper_config();
        let mut cfg2 = cfg.clone();
        cfg2.lambda = 2.0;
        let nu = spectral_edge(&cfg) + 7.3e3;
        let a = molecule_number(nu, &cfg).unwrap();
        let b = molecule_number(nu, &cfg2).unwrap();
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-12);
    }

    #[test]
    fn rabi_and_atom_number_linearity() {
        let cfg = paper_config();
        let nu = spectral_edge(&cfg) + 12e3;
        let base = molecule_number(nu, &cfg).unwrap();

        let mut cfg_r = cfg.clone();
        cfg_r.pulse.rabi *= 2.0;
        assert_relative_eq!(
            molecule_number(nu, &cfg_r).unwrap(),
            4.0 * base,
            max_relative = 1e-12
        );

        let mut cfg_n = cfg.clone();
        cfg_n.mix.n_a *= 2.0;
        cfg_n.mix.n_b *= 2.0;
        assert_relative_eq!(
            molecule_number(nu, &cfg_n).unwrap(),
            4.0 * base,
            max_relative = 1e-12
        );
    }

    #[test]
    fn quadrature_tolerance_stability() {
        let cfg = paper_config();
        let nu = spectral_edge(&cfg) + 20e3;
        let loose = molecule_number(nu, &cfg).unwrap();
        let mut tight_cfg = cfg.clone();
        tight_cfg.quad.rel_tol = cfg.quad.rel_tol / 10.0;
        let tight = molecule_number(nu, &tight_cfg).unwrap();
        assert_relative_eq!(loose, tight, max_relative = 1e-6);
    }

    #[test]
    fn fixed_rule_agrees_with_adaptive() {
        let cfg = paper_config();
        let nu = spectral_edge(&cfg) + 15e3;
        let adaptive = molecule_number(nu, &cfg).unwrap();
        let mut fixed_cfg = cfg.clone();
        fixed_cfg.method = QuadratureMethod::FixedPanels(256);
        let fixed = molecule_number(nu, &fixed_cfg).unwrap();
        assert_relative_eq!(adaptive, fixed, max_relative = 1e-8);
    }

    #[test]
    fn narrow_pulse_limit_is_product_form() {
        // τ = 1 ms: lineshape → h(δ)·F_f(δ)·√π·ħ/τ pointwise within 1%
        let mut cfg = paper_config();
        cfg.pulse.tau = 1e-3;
        let kt = K_B * 730e-9;
        for f_kt in [0.5, 1.0, 2.0, 4.0] {
            let delta = f_kt * kt;
            let nu = spectral_edge(&cfg) + delta / PLANCK_H;
            let full = molecule_number(nu, &cfg).unwrap();
            let product = cfg.lambda
                * FRAC_PI_2
                * (cfg.pulse.rabi * cfg.pulse.tau).powi(2)
                * pair_energy_density(delta, &cfg.mix, &cfg.trap).unwrap()
                * franck_condon(delta, &cfg.bound, &cfg.trap).unwrap()
                * core::f64::consts::PI.sqrt()
                * HBAR
                / cfg.pulse.tau;
            assert_relative_eq!(full, product, max_relative = 0.01);
        }
    }

    #[test]
    fn perturbativity_of_reference_conditions() {
        // Ωτ ≈ 7 but F_f ~ 1e-3 keeps the drive perturbative
        let cfg = paper_config();
        let m = perturbativity_metric(&cfg);
        assert!(m > 0.0 && m < 0.5, "metric {m}");
        assert!(perturbative_ok(&cfg));
        // cranked drive trips the warning
        let mut hot = cfg.clone();
        hot.pulse.rabi *= 20.0;
        assert!(!perturbative_ok(&hot));
    }

    #[test]
    fn grid_validation() {
        let cfg = paper_config();
        assert!(compute_spectrum(&[], &cfg).is_err());
        assert!(compute_spectrum(&[1e6, 1e6], &cfg).is_err());
        assert!(compute_spectrum(&[2e6, 1e6], &cfg).is_err());
    }
}
