//! The five subcommands. Grid points and sampling chunks are evaluated in
//! parallel on the global rayon pool; outputs are collected in input order,
//! so results are byte-identical for any `--threads` value.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use feshrf_core::constants::{K_B, PLANCK_H};
use feshrf_core::fit::{
    self, FitError, SpectrumFitResult, SpectrumModel,
};
use feshrf_core::oracle::{
    cm_energy_gof, compare_engine_reference, max_energy_identity_violation, rel_cm_correlation,
    relative_energy_gof, sample_chunk, PairSample, SampleConfig, SAMPLE_CHUNK,
};
use feshrf_core::resonance::{
    binding_energy_from_field, closed_channel_factor, BoundStateInfo,
};
use feshrf_core::spectrum::{
    molecule_number, perturbativity_metric, spectral_edge, Spectrum, SpectrumPoint,
};
use feshrf_core::units::{from_si, to_si, Unit};
use feshrf_core::Error as CoreError;

use crate::config::{self, RunConfig};
use crate::data;
use crate::report::{
    self, FitDiagnostics, OracleCheck, OracleReport, ReportMeta, ResidualRow,
    ResonanceFitReport, ResonanceFitSection, ResonancePointRow, SpectrumFitReport,
    SpectrumFitSection,
};
use crate::AppError;

/// Measured molecule yield the shipped reference configuration is sanity
/// checked against ("up to 5·10⁴" at the reference conditions).
pub const REFERENCE_PEAK_MOLECULES: f64 = 5e4;

/// Spectroscopic binding energy measured at 545.994 G for this resonance
/// (kHz); the field→E_b map predicts a different value, see the oracle
/// report note.
pub const REFERENCE_MEASURED_BINDING_KHZ: f64 = 127.6;

const KHZ_J: f64 = 1e3 * PLANCK_H;

/// Parse `start:stop:step` into an inclusive, strictly increasing grid.
fn parse_range(spec: &str, flag: &str) -> Result<Vec<f64>, AppError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(AppError::input(format!(
            "{flag}: expected start:stop:step, got {spec:?}"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| AppError::input(format!("{flag}: cannot parse {p:?} as a number")))
        })
        .collect::<Result<_, _>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) {
        return Err(AppError::input(format!(
            "{flag}: step must be positive, got {step}"
        )));
    }
    if !(stop >= start) {
        return Err(AppError::input(format!(
            "{flag}: stop must not be below start"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

fn load_config(path_arg: Option<PathBuf>) -> Result<RunConfig, AppError> {
    let path = config::resolve_config_path(path_arg)?;
    config::load(&path)
}

/// `spectrum`: model N_mol over an RF grid, written as CSV.
pub fn cmd_spectrum(
    config_path: Option<PathBuf>,
    grid_spec: &str,
    out: &Path,
) -> Result<(), AppError> {
    let cfg = load_config(config_path)?;
    let model = cfg.model_config()?;
    let grid = parse_range(grid_spec, "--grid")?;

    let numbers: Vec<f64> = grid
        .par_iter()
        .map(|&nu| molecule_number(nu, &model))
        .collect::<Result<_, CoreError>>()
        .map_err(AppError::from)?;

    let points: Vec<SpectrumPoint> = grid
        .iter()
        .zip(&numbers)
        .map(|(&frequency, &molecule_number)| SpectrumPoint {
            frequency,
            molecule_number,
            uncertainty: None,
        })
        .collect();
    let spectrum = Spectrum::new(points)?;
    data::write_spectrum(out, &spectrum)?;
    println!("wrote {} rows to {}", spectrum.len(), out.display());
    Ok(())
}

fn spectrum_fit_section(fit: &SpectrumFitResult, converged: bool) -> SpectrumFitSection {
    SpectrumFitSection {
        converged,
        n_iterations: fit.n_iterations,
        binding_energy_khz: fit.e_b / KHZ_J,
        binding_energy_sigma_khz: fit.e_b_sigma / KHZ_J,
        lambda: fit.lambda,
        lambda_sigma: fit.lambda_sigma,
        covariance: [
            [fit.covariance[0][0] / (KHZ_J * KHZ_J), fit.covariance[0][1] / KHZ_J],
            [fit.covariance[1][0] / KHZ_J, fit.covariance[1][1]],
        ],
        residual_norm: fit.residual_norm,
    }
}

fn spectrum_fit_diagnostics(
    model: &SpectrumModel,
    data_has_uncertainty: bool,
    fit: &SpectrumFitResult,
) -> Result<FitDiagnostics, AppError> {
    let bound = BoundStateInfo::from_binding_energy(fit.e_b, &model.resonance)?;
    let cfg = model.config_at(fit.e_b, fit.lambda.max(0.0))?;
    let perturbativity = perturbativity_metric(&cfg);
    Ok(FitDiagnostics {
        chi: bound.chi,
        chi_raw: bound.chi_raw,
        chi_clamped: bound.chi != bound.chi_raw,
        perturbativity,
        perturbative_ok: perturbativity <= 0.5,
        quadrature_rel_tol: model.quad.rel_tol,
        weighting: if data_has_uncertainty {
            "measured".to_string()
        } else {
            "poisson".to_string()
        },
    })
}

fn spectrum_residuals(
    model: &SpectrumModel,
    data: &Spectrum,
    fit: &SpectrumFitResult,
) -> Result<Vec<ResidualRow>, AppError> {
    let cfg = model.config_at(fit.e_b, fit.lambda.max(0.0))?;
    data.points()
        .iter()
        .map(|p| {
            Ok(ResidualRow {
                rf_frequency_hz: p.frequency,
                observed: p.molecule_number,
                model: molecule_number(p.frequency, &cfg)?,
            })
        })
        .collect()
}

/// `fit-spectrum`: two-parameter (E_b, λ) fit to a measured spectrum.
pub fn cmd_fit_spectrum(
    config_path: Option<PathBuf>,
    data_path: &Path,
    out: &Path,
) -> Result<(), AppError> {
    let cfg = load_config(config_path)?;
    let model = cfg.spectrum_model()?;
    let spectrum = data::read_spectrum(data_path)?;
    let has_uncertainty = spectrum.points().iter().any(|p| p.uncertainty.is_some());

    let write_report = |fit: &SpectrumFitResult, converged: bool| -> Result<(), AppError> {
        let report = SpectrumFitReport {
            meta: ReportMeta::now(),
            config: cfg.clone(),
            data_path: data_path.display().to_string(),
            fit: spectrum_fit_section(fit, converged),
            diagnostics: spectrum_fit_diagnostics(&model, has_uncertainty, fit)?,
            residuals: spectrum_residuals(&model, &spectrum, fit)?,
        };
        report::write_json(out, &report)
    };

    match fit::fit_spectrum(&spectrum, &model, None) {
        Ok(fit) => {
            write_report(&fit, true)?;
            println!(
                "E_b/h = {:.4} kHz +- {:.4} kHz, lambda = {:.4} +- {:.4}",
                fit.e_b / KHZ_J,
                fit.e_b_sigma / KHZ_J,
                fit.lambda,
                fit.lambda_sigma
            );
            Ok(())
        }
        Err(FitError::SpectrumNotConverged { best }) => {
            write_report(&best, false)?;
            Err(AppError::CheckFailure(format!(
                "fit did not converge after {} iterations (report written to {})",
                best.n_iterations,
                out.display()
            )))
        }
        Err(FitError::Boundary { parameter, best }) => {
            write_report(&best, false)?;
            Err(AppError::CheckFailure(format!(
                "fit drove {parameter} to its bound (report written to {})",
                out.display()
            )))
        }
        Err(e @ (FitError::Degenerate(_) | FitError::TooFewPoints { .. })) => {
            Err(AppError::input(e.to_string()))
        }
        Err(FitError::Model(e)) => Err(AppError::from(e)),
        Err(e) => Err(AppError::CheckFailure(e.to_string())),
    }
}

/// `fit-resonance`: (B₀, ΔB) from binding-energy-vs-field points.
pub fn cmd_fit_resonance(
    config_path: Option<PathBuf>,
    points_path: &Path,
    out: &Path,
) -> Result<(), AppError> {
    let cfg = load_config(config_path)?;
    let template = cfg.resonance_params()?;
    let points = data::read_field_points(points_path)?;
    if points.len() < 3 {
        return Err(AppError::input(format!(
            "{}: need at least 3 points, got {}",
            points_path.display(),
            points.len()
        )));
    }

    let build_report = |fit: &fit::ResonanceFitResult, converged: bool| -> ResonanceFitReport {
        let mut fitted = template.clone();
        fitted.b0 = fit.b0;
        fitted.delta_b = fit.delta_b;
        let residuals = points
            .iter()
            .map(|p| ResonancePointRow {
                b_field_gauss: from_si(p.b, Unit::Gauss),
                binding_energy_khz: p.e_b / KHZ_J,
                sigma_khz: p.sigma / KHZ_J,
                model_khz: binding_energy_from_field(p.b, &fitted)
                    .map(|e| e / KHZ_J)
                    .unwrap_or(f64::NAN),
            })
            .collect();
        ResonanceFitReport {
            meta: ReportMeta::now(),
            config: cfg.clone(),
            points_path: points_path.display().to_string(),
            fit: ResonanceFitSection {
                converged,
                n_iterations: fit.n_iterations,
                b0_gauss: from_si(fit.b0, Unit::Gauss),
                b0_sigma_gauss: from_si(fit.b0_sigma, Unit::Gauss),
                delta_b_gauss: from_si(fit.delta_b, Unit::Gauss),
                delta_b_sigma_gauss: from_si(fit.delta_b_sigma, Unit::Gauss),
                covariance_gauss2: [
                    [fit.covariance[0][0] * 1e8, fit.covariance[0][1] * 1e8],
                    [fit.covariance[1][0] * 1e8, fit.covariance[1][1] * 1e8],
                ],
                residual_norm: fit.residual_norm,
            },
            residuals,
        }
    };

    match fit::fit_resonance(&points, &template) {
        Ok(fit) => {
            report::write_json(out, &build_report(&fit, true))?;
            println!(
                "B0 = {:.4} G +- {:.1} mG, Delta_B = {:.3} G +- {:.3} G",
                from_si(fit.b0, Unit::Gauss),
                from_si(fit.b0_sigma, Unit::MilliGauss),
                from_si(fit.delta_b, Unit::Gauss),
                from_si(fit.delta_b_sigma, Unit::Gauss),
            );
            Ok(())
        }
        Err(FitError::ResonanceNotConverged { best }) => {
            report::write_json(out, &build_report(&best, false))?;
            Err(AppError::CheckFailure(format!(
                "resonance fit did not converge (report written to {})",
                out.display()
            )))
        }
        Err(
            e @ (FitError::InvalidBranch { .. }
            | FitError::Degenerate(_)
            | FitError::TooFewPoints { .. }),
        ) => Err(AppError::input(e.to_string())),
        Err(FitError::Model(e)) => Err(AppError::from(e)),
        Err(e) => Err(AppError::CheckFailure(e.to_string())),
    }
}

/// `binding-curve`: E_b(B) and χ(B) over a field range on the bound side.
pub fn cmd_binding_curve(
    config_path: Option<PathBuf>,
    range_spec: &str,
    out: &Path,
) -> Result<(), AppError> {
    let cfg = load_config(config_path)?;
    let params = cfg.resonance_params()?;
    let fields_gauss = parse_range(range_spec, "--field-range")?;

    let b0_gauss = from_si(params.b0, Unit::Gauss);
    let crosses = fields_gauss
        .windows(2)
        .any(|w| (w[0] - b0_gauss) * (w[1] - b0_gauss) <= 0.0)
        || fields_gauss.contains(&b0_gauss);
    if crosses {
        return Err(AppError::input(format!(
            "--field-range crosses the resonance pole at B0 = {b0_gauss} G"
        )));
    }

    let mut rows = Vec::with_capacity(fields_gauss.len());
    for &g in &fields_gauss {
        let b = to_si(g, Unit::Gauss);
        let e_b = binding_energy_from_field(b, &params).map_err(|e| match e {
            CoreError::NoBoundState { .. } => AppError::input(format!(
                "no bound state at {g} G; --field-range must stay on the bound side"
            )),
            other => AppError::from(other),
        })?;
        let chi = closed_channel_factor(b, &params)?;
        rows.push((g, e_b / KHZ_J, chi.value));
    }
    data::write_binding_curve(out, &rows)?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn check(name: &str, passed: bool, details: serde_json::Value) -> OracleCheck {
    OracleCheck {
        name: name.to_string(),
        passed,
        details,
    }
}

/// `oracle`: Monte Carlo phase-space checks plus engine-vs-reference
/// quadrature comparison and the absolute-scale sanity bound.
pub fn cmd_oracle(
    config_path: Option<PathBuf>,
    samples: usize,
    seed_arg: Option<u64>,
    corrupt_expected_t: Option<f64>,
    out: &Path,
) -> Result<(), AppError> {
    if samples < 10_000 {
        return Err(AppError::input(format!(
            "--samples must be at least 10000, got {samples}"
        )));
    }
    let cfg = load_config(config_path)?;
    let seed = seed_arg.unwrap_or(cfg.seed);
    let model = cfg.model_config()?;
    let temperature = to_si(cfg.mixture.temperature_nk, Unit::NanoKelvin);

    // pair sampling on the matched effective trap, in fixed chunks
    let sample_cfg = SampleConfig::matched(&cfg.trap_config()?, cfg.species_pair()?, temperature);
    let n_chunks = samples.div_ceil(SAMPLE_CHUNK);
    let chunks: Vec<Vec<PairSample>> = (0..n_chunks)
        .into_par_iter()
        .map(|i| {
            let count = if i + 1 == n_chunks {
                samples - i * SAMPLE_CHUNK
            } else {
                SAMPLE_CHUNK
            };
            sample_chunk(&sample_cfg, seed, i as u64, count)
        })
        .collect();
    let pair_samples: Vec<PairSample> = chunks.into_iter().flatten().collect();

    let bins = 64;
    let gof_temperature = temperature * corrupt_expected_t.unwrap_or(1.0);
    let rel = relative_energy_gof(&pair_samples, gof_temperature, bins)?;
    let cm = cm_energy_gof(&pair_samples, gof_temperature, bins)?;
    let corr = rel_cm_correlation(&pair_samples)?;
    let corr_bound = 3.0 / (samples as f64).sqrt();
    let identity = max_energy_identity_violation(&pair_samples);

    // negative control: the test must reject a wrong expected density
    let wrong = relative_energy_gof(&pair_samples, 1.5 * temperature, bins)?;

    // engine vs reference integration on a grid bracketing the line
    let edge = spectral_edge(&model);
    let kt_hz = K_B * temperature / PLANCK_H;
    let cmp_grid: Vec<f64> = (0..50)
        .map(|i| edge - 1.5 * kt_hz + i as f64 * (9.5 * kt_hz / 49.0))
        .collect();
    let cmp = compare_engine_reference(&cmp_grid, &model, 1e-8)?;

    // absolute-scale sanity: peak within a factor 30 of the reference yield
    let peak_grid: Vec<f64> = (0..200)
        .map(|i| edge - 2.0 * kt_hz + i as f64 * (10.0 * kt_hz / 199.0))
        .collect();
    let peak = peak_grid
        .par_iter()
        .map(|&nu| molecule_number(nu, &model))
        .collect::<Result<Vec<f64>, CoreError>>()?
        .into_iter()
        .fold(0.0_f64, f64::max);
    let ratio = peak / REFERENCE_PEAK_MOLECULES;
    let scale_ok = (1.0 / 30.0..=30.0).contains(&ratio);

    let checks = vec![
        check(
            "relative_energy_gamma3_gof",
            rel.p_value > 0.01,
            serde_json::json!({"statistic": rel.statistic, "dof": rel.dof, "p_value": rel.p_value}),
        ),
        check(
            "cm_energy_gamma3_gof",
            cm.p_value > 0.01,
            serde_json::json!({"statistic": cm.statistic, "dof": cm.dof, "p_value": cm.p_value}),
        ),
        check(
            "rel_cm_energy_independence",
            corr.abs() < corr_bound,
            serde_json::json!({"pearson_r": corr, "bound": corr_bound}),
        ),
        check(
            "pair_energy_identity",
            identity < 1e-12,
            serde_json::json!({"max_relative_violation": identity}),
        ),
        check(
            "negative_control_wrong_temperature",
            wrong.p_value < 1e-6,
            serde_json::json!({"p_value": wrong.p_value}),
        ),
        check(
            "engine_vs_reference_quadrature",
            cmp.ok,
            serde_json::json!({
                "rel_tol": cmp.rel_tol,
                "worst_ratio": cmp.worst_ratio,
                "worst_frequency_hz": cmp.worst_frequency,
                "grid_points": cmp_grid.len(),
            }),
        ),
        check(
            "absolute_scale_sanity",
            scale_ok,
            serde_json::json!({
                "peak_molecule_number": peak,
                "reference_peak": REFERENCE_PEAK_MOLECULES,
                "ratio": ratio,
                "bound_factor": 30.0,
            }),
        ),
    ];
    let all_passed = checks.iter().all(|c| c.passed);

    let binding_energy_note = cfg.field_gauss.and_then(|g| {
        if (g - 545.994).abs() < 1e-3 {
            let predicted_khz = model.bound.e_b / KHZ_J;
            Some(format!(
                "the resonance-parameter map B -> E_b predicts {predicted_khz:.2} kHz at {g} G, \
                 while the measured reference binding energy at this field is \
                 {REFERENCE_MEASURED_BINDING_KHZ} kHz (factor {:.2}); treat fitted binding \
                 energies as the measurement and the map as the model prediction",
                REFERENCE_MEASURED_BINDING_KHZ / predicted_khz
            ))
        } else {
            None
        }
    });

    let report = OracleReport {
        meta: ReportMeta::now(),
        config: cfg,
        samples,
        seed,
        checks,
        all_passed,
        peak_molecule_number: peak,
        reference_peak_molecules: REFERENCE_PEAK_MOLECULES,
        peak_ratio: ratio,
        binding_energy_note,
    };
    report::write_json(out, &report)?;

    for c in &report.checks {
        println!("[{}] {}", if c.passed { "ok" } else { "FAIL" }, c.name);
    }
    println!("peak molecule number {:.3e} (x{:.2} of reference)", peak, ratio);
    if let Some(note) = &report.binding_energy_note {
        println!("note: {note}");
    }
    if all_passed {
        println!("all oracle checks passed");
        Ok(())
    } else {
        Err(AppError::CheckFailure(format!(
            "{} oracle check(s) failed (report written to {})",
            report.checks.iter().filter(|c| !c.passed).count(),
            out.display()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        let g = parse_range("0:10:2.5", "--grid").unwrap();
        assert_eq!(g, vec![0.0, 2.5, 5.0, 7.5, 10.0]);
        assert!(parse_range("0:10:0", "--grid")
            .unwrap_err()
            .to_string()
            .contains("--grid"));
        assert!(parse_range("0:10:-1", "--grid").is_err());
        assert!(parse_range("10:0:1", "--grid").is_err());
        assert!(parse_range("1:2", "--grid").is_err());
        assert!(parse_range("a:b:c", "--grid").is_err());
    }

    #[test]
    fn range_endpoint_inclusive_within_tolerance() {
        let g = parse_range("100:101:0.1", "--grid").unwrap();
        assert_eq!(g.len(), 11);
        assert!((g[10] - 101.0).abs() < 1e-9);
    }
}
