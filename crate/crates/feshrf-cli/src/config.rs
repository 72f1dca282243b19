//! Run configuration: JSON in laboratory units (G, nK, kHz, nm, µs),
//! converted to SI once at load. Unknown keys are hard errors — a typo in
//! a physics constant must never pass silently.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use feshrf_core::constants::PLANCK_H;
use feshrf_core::quadrature::QuadratureConfig;
use feshrf_core::trap::{effective_trap, EffectiveTrap, MixtureState, TrapConfig};
use feshrf_core::units::{to_si, Unit};
use feshrf_core::{PulseParams, ResonanceParams, SpeciesPair};

use crate::AppError;

/// Environment variable consulted when no config path is given.
pub const CONFIG_ENV_VAR: &str = "FESHRF_CONFIG";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesSection {
    pub label_a: String,
    pub mass_a_amu: f64,
    pub label_b: String,
    pub mass_b_amu: f64,
}

/// Per-species trap frequencies: either one mean value (treated as the
/// geometric mean of an isotropic trap) or three per-axis values, in Hz.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_freq_a_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freqs_a_hz: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_freq_b_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freqs_b_hz: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSection {
    pub n_a: f64,
    pub n_b: f64,
    pub temperature_nk: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceSection {
    pub a_bg_nm: f64,
    pub b0_gauss: f64,
    pub delta_b_gauss: f64,
    pub delta_mu_bohr_magnetons: f64,
    pub a_prime_nm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    /// ν_Rabi = Ω/2π in kHz.
    pub rabi_khz: f64,
    pub tau_us: f64,
    pub atomic_line_hz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub rel_tol: f64,
    #[serde(default)]
    pub abs_tol: f64,
}

/// Top-level run configuration, laboratory units throughout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub species: SpeciesSection,
    pub trap: TrapSection,
    pub mixture: MixtureSection,
    pub resonance: ResonanceSection,
    pub pulse: PulseSection,
    /// Working magnetic field (G); required by spectrum and oracle runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_gauss: Option<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureSection>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_seed() -> u64 {
    42
}

/// Resolve the config path: explicit argument, else `FESHRF_CONFIG`.
pub fn resolve_config_path(arg: Option<PathBuf>) -> Result<PathBuf, AppError> {
    if let Some(p) = arg {
        return Ok(p);
    }
    match std::env::var_os(CONFIG_ENV_VAR) {
        Some(v) if !v.is_empty() => Ok(PathBuf::from(v)),
        _ => Err(AppError::input(format!(
            "no config path given and {CONFIG_ENV_VAR} is not set"
        ))),
    }
}

pub fn load(path: &Path) -> Result<RunConfig, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::input(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| AppError::input(format!("invalid config {}: {e}", path.display())))?;
    Ok(cfg)
}

impl RunConfig {
    pub fn species_pair(&self) -> Result<SpeciesPair, AppError> {
        Ok(SpeciesPair::new(
            &self.species.label_a,
            to_si(self.species.mass_a_amu, Unit::Amu),
            &self.species.label_b,
            to_si(self.species.mass_b_amu, Unit::Amu),
        )?)
    }

    pub fn trap_config(&self) -> Result<TrapConfig, AppError> {
        let omega = |mean: &Option<f64>, per_axis: &Option<[f64; 3]>, which: &str| {
            match (mean, per_axis) {
                (Some(f), None) => Ok([f * std::f64::consts::TAU; 3]),
                (None, Some(fs)) => Ok([
                    fs[0] * std::f64::consts::TAU,
                    fs[1] * std::f64::consts::TAU,
                    fs[2] * std::f64::consts::TAU,
                ]),
                _ => Err(AppError::input(format!(
                    "trap: give exactly one of mean_freq_{which}_hz or freqs_{which}_hz"
                ))),
            }
        };
        let omega_a = omega(&self.trap.mean_freq_a_hz, &self.trap.freqs_a_hz, "a")?;
        let omega_b = omega(&self.trap.mean_freq_b_hz, &self.trap.freqs_b_hz, "b")?;
        Ok(TrapConfig::new(omega_a, omega_b)?)
    }

    pub fn effective_trap(&self) -> Result<EffectiveTrap, AppError> {
        Ok(effective_trap(&self.trap_config()?))
    }

    pub fn mixture(&self) -> Result<MixtureState, AppError> {
        Ok(MixtureState::new(
            self.mixture.n_a,
            self.mixture.n_b,
            to_si(self.mixture.temperature_nk, Unit::NanoKelvin),
        )?)
    }

    pub fn resonance_params(&self) -> Result<ResonanceParams, AppError> {
        Ok(ResonanceParams::new(
            to_si(self.resonance.a_bg_nm, Unit::NanoMeter),
            to_si(self.resonance.b0_gauss, Unit::Gauss),
            to_si(self.resonance.delta_b_gauss, Unit::Gauss),
            to_si(self.resonance.delta_mu_bohr_magnetons, Unit::BohrMagneton),
            to_si(self.resonance.a_prime_nm, Unit::NanoMeter),
            self.species_pair()?,
        )?)
    }

    pub fn pulse(&self) -> Result<PulseParams, AppError> {
        Ok(PulseParams::new(
            std::f64::consts::TAU * to_si(self.pulse.rabi_khz, Unit::KiloHertz),
            to_si(self.pulse.tau_us, Unit::MicroSecond),
            self.pulse.atomic_line_hz * PLANCK_H,
        )?)
    }

    pub fn field_tesla(&self) -> Result<f64, AppError> {
        self.field_gauss
            .map(|g| to_si(g, Unit::Gauss))
            .ok_or_else(|| AppError::input("config is missing field_gauss"))
    }

    pub fn quadrature_config(&self) -> QuadratureConfig {
        match &self.quadrature {
            Some(q) => QuadratureConfig {
                rel_tol: q.rel_tol,
                abs_tol: q.abs_tol,
                ..QuadratureConfig::default()
            },
            None => QuadratureConfig::default(),
        }
    }

    /// Spectrum model with E_b, λ free (the fit template).
    pub fn spectrum_model(&self) -> Result<feshrf_core::fit::SpectrumModel, AppError> {
        let mut m = feshrf_core::fit::SpectrumModel::new(
            self.mixture()?,
            self.effective_trap()?,
            self.pulse()?,
            self.resonance_params()?,
        );
        m.quad = self.quadrature_config();
        Ok(m)
    }

    /// Full model at the configured field and λ.
    pub fn model_config(&self) -> Result<feshrf_core::ModelConfig, AppError> {
        let params = self.resonance_params()?;
        let bound = feshrf_core::BoundStateInfo::from_field(self.field_tesla()?, &params)?;
        let mut cfg = feshrf_core::ModelConfig::new(
            self.mixture()?,
            self.effective_trap()?,
            self.pulse()?,
            bound,
            self.lambda,
        )?;
        cfg.quad = self.quadrature_config();
        Ok(cfg)
    }

    /// The reference ⁴⁰K–⁸⁷Rb configuration shipped with the tool.
    pub fn reference_default() -> Self {
        RunConfig {
            species: SpeciesSection {
                label_a: "K40".into(),
                mass_a_amu: 39.9639985,
                label_b: "Rb87".into(),
                mass_b_amu: 86.9091805,
            },
            trap: TrapSection {
                mean_freq_a_hz: Some(335.0),
                freqs_a_hz: None,
                mean_freq_b_hz: Some(244.0),
                freqs_b_hz: None,
            },
            mixture: MixtureSection {
                n_a: 5e5,
                n_b: 2.5e5,
                temperature_nk: 730.0,
            },
            resonance: ResonanceSection {
                a_bg_nm: 9.88,
                b0_gauss: 546.618,
                delta_b_gauss: 3.04,
                delta_mu_bohr_magnetons: 2.32,
                a_prime_nm: 9.10,
            },
            pulse: PulseSection {
                rabi_khz: 45.0,
                tau_us: 25.0,
                atomic_line_hz: 8.0e7,
            },
            field_gauss: Some(545.994),
            lambda: 1.0,
            quadrature: None,
            seed: 42,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_config_round_trips_json() {
        let cfg = RunConfig::reference_default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.mixture.n_a, cfg.mixture.n_a);
        assert_eq!(back.field_gauss, cfg.field_gauss);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"species":{"label_a":"K40","mass_a_amu":40.0,"label_b":"Rb87","mass_b_amu":87.0,"typo_key":1}}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn builds_core_types() {
        let cfg = RunConfig::reference_default();
        let pair = cfg.species_pair().unwrap();
        assert_relative_eq!(pair.reduced_mass / feshrf_core::constants::AMU, 27.3757, max_relative = 1e-4);
        let trap = cfg.effective_trap().unwrap();
        assert_relative_eq!(
            trap.omega_tilde / std::f64::consts::TAU,
            285.902,
            max_relative = 1e-5
        );
        let model = cfg.model_config().unwrap();
        assert_relative_eq!(
            model.bound.e_b / PLANCK_H,
            54.8525e3,
            max_relative = 1e-5
        );
    }

    #[test]
    fn per_axis_and_mean_are_exclusive() {
        let mut cfg = RunConfig::reference_default();
        cfg.trap.freqs_a_hz = Some([300.0, 300.0, 500.0]);
        assert!(cfg.trap_config().is_err());
        cfg.trap.mean_freq_a_hz = None;
        assert!(cfg.trap_config().is_ok());
    }
}
