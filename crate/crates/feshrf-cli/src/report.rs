//! JSON report types: schema-versioned, self-describing (the exact run
//! configuration is embedded), re-loadable.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::AppError;

pub const SCHEMA_VERSION: u32 = 1;

/// Non-finite floats (unconstrained uncertainties of degenerate fits) are
/// written as JSON null and read back as NaN.
mod nullable_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Same convention for 2×2 covariance matrices.
mod nullable_mat2 {
    use serde::{Deserialize, Deserializer, Serializer};
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(m: &[[f64; 2]; 2], s: S) -> Result<S::Ok, S::Error> {
        let as_opt: Vec<Vec<Option<f64>>> = m
            .iter()
            .map(|row| row.iter().map(|v| v.is_finite().then_some(*v)).collect())
            .collect();
        let mut seq = s.serialize_seq(Some(2))?;
        for row in &as_opt {
            seq.serialize_element(row)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[[f64; 2]; 2], D::Error> {
        let rows = <[[Option<f64>; 2]; 2]>::deserialize(d)?;
        Ok(rows.map(|r| r.map(|v| v.unwrap_or(f64::NAN))))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportMeta {
    pub schema_version: u32,
    pub tool_version: String,
    /// RFC 3339 UTC; the only field allowed to differ between identical runs.
    pub timestamp: String,
}

impl ReportMeta {
    pub fn now() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualRow {
    pub rf_frequency_hz: f64,
    pub observed: f64,
    pub model: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumFitSection {
    pub converged: bool,
    pub n_iterations: usize,
    pub binding_energy_khz: f64,
    #[serde(with = "nullable_f64")]
    pub binding_energy_sigma_khz: f64,
    pub lambda: f64,
    #[serde(with = "nullable_f64")]
    pub lambda_sigma: f64,
    /// Covariance of (E_b/h in kHz, λ).
    #[serde(with = "nullable_mat2")]
    pub covariance: [[f64; 2]; 2],
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Open-channel fraction at the fitted binding energy.
    pub chi: f64,
    pub chi_raw: f64,
    pub chi_clamped: bool,
    /// Ω·√F_f,max·τ; perturbative treatment wants this ≤ 0.5.
    pub perturbativity: f64,
    pub perturbative_ok: bool,
    pub quadrature_rel_tol: f64,
    /// "measured" when the data carried uncertainties, else "poisson".
    pub weighting: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumFitReport {
    pub meta: ReportMeta,
    pub config: RunConfig,
    pub data_path: String,
    pub fit: SpectrumFitSection,
    pub diagnostics: FitDiagnostics,
    pub residuals: Vec<ResidualRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceFitSection {
    pub converged: bool,
    pub n_iterations: usize,
    pub b0_gauss: f64,
    #[serde(with = "nullable_f64")]
    pub b0_sigma_gauss: f64,
    pub delta_b_gauss: f64,
    #[serde(with = "nullable_f64")]
    pub delta_b_sigma_gauss: f64,
    /// Covariance of (B₀, ΔB) in G².
    #[serde(with = "nullable_mat2")]
    pub covariance_gauss2: [[f64; 2]; 2],
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonancePointRow {
    pub b_field_gauss: f64,
    pub binding_energy_khz: f64,
    pub sigma_khz: f64,
    #[serde(with = "nullable_f64")]
    pub model_khz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceFitReport {
    pub meta: ReportMeta,
    pub config: RunConfig,
    pub points_path: String,
    pub fit: ResonanceFitSection,
    pub residuals: Vec<ResonancePointRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub meta: ReportMeta,
    pub config: RunConfig,
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<OracleCheck>,
    pub all_passed: bool,
    /// Model peak molecule number for the configured conditions and its
    /// ratio to the reference measured yield.
    pub peak_molecule_number: f64,
    pub reference_peak_molecules: f64,
    pub peak_ratio: f64,
    /// Note on the known gap between the field→E_b map and the measured
    /// binding energy at the reference field, when applicable.
    pub binding_energy_note: Option<String>,
}

pub fn write_json<T: Serialize>(path: &Path, report: &T) -> Result<(), AppError> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| AppError::input(format!("cannot serialize report: {e}")))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| AppError::input(format!("cannot write {}: {e}", path.display())))
}
