//! The two analysis pipelines: per-spectrum fits of (E_b, λ) and the
//! resonance characterization fit of (B₀, ΔB), with a self-consistent
//! loop tying them together through the ΔB-dependence of χ.
//!
//! Both fits are damped Gauss–Newton (Levenberg-style damping, ×10 on
//! reject, ×0.3 on accept) over parameters scaled to order one, with
//! central finite-difference derivatives at relative step 1e-6. The scale
//! factor λ is linear in the model and is profiled in closed form at every
//! E_b step, so the spectrum fit iterates over a single parameter.
//! Convergence: relative parameter change < 1e-8 or gradient norm < 1e-10
//! in the scaled coordinates. Covariances come from the Jacobian at the
//! optimum scaled by the reduced chi-square.
//!
//! Weighting: measured uncertainties when present, otherwise the
//! Poisson-motivated σ = √max(count, 1).

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use thiserror::Error;

use crate::constants::{K_B, PLANCK_H};
use crate::error::Error;
use crate::quadrature::QuadratureConfig;
use crate::resonance::{
    binding_energy_from_field, scattering_length, BoundStateInfo, ResonanceParams,
};
use crate::spectrum::{molecule_number, ModelConfig, PulseParams, QuadratureMethod, Spectrum};
use crate::trap::{EffectiveTrap, MixtureState};

/// Lower bound on the fitted binding energy (h·1 Hz).
pub const E_B_LOWER: f64 = PLANCK_H;
/// Upper bound on the fitted binding energy (h·10 MHz).
pub const E_B_UPPER: f64 = 1e7 * PLANCK_H;
/// Upper bound on the fitted scale factor.
pub const LAMBDA_UPPER: f64 = 1e3;

const MAX_ITER: usize = 200;
const FD_REL_STEP: f64 = 1e-6;
const PARAM_TOL: f64 = 1e-8;
const GRAD_TOL: f64 = 1e-10;

/// Errors from the fitting pipelines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("degenerate data: {0}")]
    Degenerate(&'static str),

    #[error("too few {what}: need at least {needed}, got {got}")]
    TooFewPoints {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("point {index} lies on the wrong side of the resonance pole")]
    InvalidBranch { index: usize },

    #[error("spectrum fit did not converge within {MAX_ITER} iterations")]
    SpectrumNotConverged { best: Box<SpectrumFitResult> },

    #[error("resonance fit did not converge within {MAX_ITER} iterations")]
    ResonanceNotConverged { best: Box<ResonanceFitResult> },

    #[error("parameter {parameter} was driven to its bound")]
    Boundary {
        parameter: &'static str,
        best: Box<SpectrumFitResult>,
    },

    #[error("self-consistent iteration did not settle; ΔB trace (T): {trace:?}")]
    IterationDiverged { trace: Vec<f64> },

    #[error("model evaluation failed: {0}")]
    Model(#[from] Error),
}

/// Spectrum model with E_b and λ left free: everything the fit needs to
/// evaluate trial spectra. χ follows E_b through the resonance parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumModel {
    pub mix: MixtureState,
    pub trap: EffectiveTrap,
    pub pulse: PulseParams,
    pub resonance: ResonanceParams,
    pub quad: QuadratureConfig,
    pub method: QuadratureMethod,
}

impl SpectrumModel {
    pub fn new(
        mix: MixtureState,
        trap: EffectiveTrap,
        pulse: PulseParams,
        resonance: ResonanceParams,
    ) -> Self {
        Self {
            mix,
            trap,
            pulse,
            resonance,
            quad: QuadratureConfig::default(),
            method: QuadratureMethod::Adaptive,
        }
    }

    /// Full model configuration at the given parameters.
    pub fn config_at(&self, e_b: f64, lambda: f64) -> Result<ModelConfig, Error> {
        let bound = BoundStateInfo::from_binding_energy(e_b, &self.resonance)?;
        let mut cfg = ModelConfig::new(self.mix, self.trap, self.pulse, bound, lambda)?;
        cfg.quad = self.quad;
        cfg.method = self.method;
        Ok(cfg)
    }

    /// λ = 1 model values on a frequency grid.
    fn unit_spectrum(&self, e_b: f64, grid: &[f64]) -> Result<Vec<f64>, Error> {
        let cfg = self.config_at(e_b, 1.0)?;
        grid.iter().map(|&nu| molecule_number(nu, &cfg)).collect()
    }
}

/// Result of a two-parameter spectrum fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFitResult {
    /// Binding energy (J).
    pub e_b: f64,
    /// 1σ uncertainty on E_b (J).
    pub e_b_sigma: f64,
    pub lambda: f64,
    pub lambda_sigma: f64,
    /// Covariance of (E_b, λ); E_b entries in J.
    pub covariance: [[f64; 2]; 2],
    /// Norm of the weighted residual vector at the optimum.
    pub residual_norm: f64,
    pub n_iterations: usize,
    pub converged: bool,
}

/// Result of the resonance characterization fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceFitResult {
    /// Resonance position (T).
    pub b0: f64,
    pub b0_sigma: f64,
    /// Resonance width (T), signed.
    pub delta_b: f64,
    pub delta_b_sigma: f64,
    /// Covariance of (B₀, ΔB) in T².
    pub covariance: [[f64; 2]; 2],
    pub residual_norm: f64,
    pub n_iterations: usize,
    pub converged: bool,
}

/// One binding-energy measurement at a magnetic field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    /// Field (T).
    pub b: f64,
    /// Binding energy (J).
    pub e_b: f64,
    /// 1σ uncertainty on the binding energy (J), positive.
    pub sigma: f64,
}

/// A measured spectrum taken at a known magnetic field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpectrum {
    /// Field (T).
    pub b: f64,
    pub spectrum: Spectrum,
}

/// Output of the self-consistent χ iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfConsistentResult {
    /// Resonance parameters with the converged (B₀, ΔB).
    pub params: ResonanceParams,
    pub rounds: usize,
    /// ΔB after each round (T).
    pub delta_b_trace: Vec<f64>,
    /// Final per-field spectrum fits.
    pub spectrum_fits: Vec<SpectrumFitResult>,
    /// Final resonance fit.
    pub resonance_fit: ResonanceFitResult,
}

/// Per-point weights 1/σ²: measured uncertainties when present, else
/// Poisson-motivated σ = √max(count, 1).
fn weights(data: &Spectrum) -> Vec<f64> {
    data.points()
        .iter()
        .map(|p| {
            let sigma = match p.uncertainty {
                Some(s) if s > 0.0 => s,
                _ => p.molecule_number.max(1.0).sqrt(),
            };
            1.0 / (sigma * sigma)
        })
        .collect()
}

/// Closed-form weighted least-squares scale, clamped to [0, LAMBDA_UPPER].
fn profile_lambda(y: &[f64], s: &[f64], w: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..y.len() {
        num += w[i] * y[i] * s[i];
        den += w[i] * s[i] * s[i];
    }
    if den <= 0.0 {
        return 0.0;
    }
    (num / den).clamp(0.0, LAMBDA_UPPER)
}

fn weighted_cost(y: &[f64], s: &[f64], w: &[f64], lambda: f64) -> f64 {
    let mut c = 0.0;
    for i in 0..y.len() {
        let r = y[i] - lambda * s[i];
        c += w[i] * r * r;
    }
    c
}

/// Starting values (E_b, λ) from the data peak.
///
/// The thermal shift puts the spectrum maximum about half a k_BT above the
/// ε_r = 0 edge, so E_b ≈ h(ν_peak − ν₀) − k_BT/2; λ from the peak-height
/// ratio against the unit model.
pub fn initial_guess(data: &Spectrum, model: &SpectrumModel) -> Result<(f64, f64), FitError> {
    let n = data.len();
    if n < 5 {
        return Err(FitError::TooFewPoints {
            what: "spectrum points",
            needed: 5,
            got: n,
        });
    }
    let pts = data.points();
    let (i_max, peak) = pts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.molecule_number.total_cmp(&b.1.molecule_number))
        .expect("non-empty");
    if i_max == 0 || i_max == n - 1 {
        return Err(FitError::Degenerate("no interior maximum"));
    }
    let y_max = peak.molecule_number;
    let y_min = pts
        .iter()
        .map(|p| p.molecule_number)
        .fold(f64::INFINITY, f64::min);
    if !(y_max > y_min) || !(y_max > 0.0) {
        return Err(FitError::Degenerate("flat or non-positive data"));
    }

    let kt = K_B * model.mix.temperature;
    let nu0 = model.pulse.atomic_line();
    let e_b = (PLANCK_H * (peak.frequency - nu0) - 0.5 * kt).clamp(100.0 * PLANCK_H, E_B_UPPER);

    let s_peak = model.unit_spectrum(e_b, &[peak.frequency])?[0];
    let lambda = if s_peak > 0.0 { y_max / s_peak } else { 1.0 };
    Ok((e_b, lambda.clamp(0.0, LAMBDA_UPPER)))
}

/// 2×2 solve; `None` when (numerically) singular.
fn solve_2x2(m: [[f64; 2]; 2], rhs: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det != 0.0 && det.is_finite()) {
        return None;
    }
    Some([
        (rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det,
        (rhs[1] * m[0][0] - rhs[0] * m[1][0]) / det,
    ])
}

fn invert_2x2(m: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det != 0.0 && det.is_finite()) {
        return None;
    }
    Some([
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ])
}

/// Weighted least-squares fit of (E_b, λ) to one spectrum.
///
/// λ is eliminated in closed form at each step, so the damped Gauss–Newton
/// iteration runs over E_b alone; the reported covariance is nevertheless
/// the full 2×2 one from the (E_b, λ) Jacobian at the optimum.
pub fn fit_spectrum(
    data: &Spectrum,
    model: &SpectrumModel,
    init: Option<(f64, f64)>,
) -> Result<SpectrumFitResult, FitError> {
    let n = data.len();
    if n < 3 {
        return Err(FitError::TooFewPoints {
            what: "spectrum points",
            needed: 3,
            got: n,
        });
    }
    let grid: Vec<f64> = data.points().iter().map(|p| p.frequency).collect();
    let y: Vec<f64> = data.points().iter().map(|p| p.molecule_number).collect();
    let w = weights(data);

    let (e_init, _) = match init {
        Some(v) => v,
        None => initial_guess(data, model)?,
    };
    let scale = e_init.clamp(E_B_LOWER, E_B_UPPER);

    let mut e_b = scale;
    let mut s = model.unit_spectrum(e_b, &grid)?;
    let mut lambda = profile_lambda(&y, &s, &w);
    let mut cost = weighted_cost(&y, &s, &w, lambda);

    let mut mu = 1e-3;
    let mut n_iterations = 0;
    let mut converged = false;

    for _ in 0..MAX_ITER {
        n_iterations += 1;

        // central-difference model derivative w.r.t. E_b
        let de = FD_REL_STEP * e_b;
        let sp = model.unit_spectrum(e_b + de, &grid)?;
        let sm = model.unit_spectrum((e_b - de).max(0.5 * E_B_LOWER), &grid)?;

        // gradient and curvature of ½·cost in the scaled coordinate
        let mut g = 0.0;
        let mut h = 0.0;
        for i in 0..n {
            let ds_dtheta = (sp[i] - sm[i]) / (2.0 * de) * scale;
            let j = -w[i].sqrt() * lambda * ds_dtheta;
            let r = w[i].sqrt() * (y[i] - lambda * s[i]);
            g += j * r;
            h += j * j;
        }
        if g.abs() < GRAD_TOL {
            converged = true;
            break;
        }
        if !(h > 0.0) {
            // λ profiled to zero leaves E_b without sensitivity
            break;
        }

        let mut accepted = false;
        let mut last_step = f64::INFINITY;
        for _ in 0..60 {
            let dtheta = -g / (h * (1.0 + mu));
            last_step = dtheta.abs();
            let e_trial = (e_b + dtheta * scale).clamp(E_B_LOWER, E_B_UPPER);
            let s_trial = model.unit_spectrum(e_trial, &grid)?;
            let lam_trial = profile_lambda(&y, &s_trial, &w);
            let cost_trial = weighted_cost(&y, &s_trial, &w, lam_trial);
            if cost_trial < cost {
                let rel_change = (e_trial - e_b).abs() / scale;
                e_b = e_trial;
                s = s_trial;
                lambda = lam_trial;
                cost = cost_trial;
                mu = (mu * 0.3).max(1e-14);
                accepted = true;
                if rel_change < PARAM_TOL {
                    converged = true;
                }
                break;
            }
            mu *= 10.0;
            if mu > 1e15 {
                break;
            }
        }
        if !accepted {
            // no downhill step exists at f64 resolution
            converged = last_step < PARAM_TOL;
            break;
        }
        if converged {
            break;
        }
    }

    // covariance from the full (E_b, λ) Jacobian at the optimum
    let de = FD_REL_STEP * e_b;
    let sp = model.unit_spectrum(e_b + de, &grid)?;
    let sm = model.unit_spectrum((e_b - de).max(0.5 * E_B_LOWER), &grid)?;
    let mut jtj = [[0.0; 2]; 2];
    let mut rtr = 0.0;
    for i in 0..n {
        let sw = w[i].sqrt();
        let j_e = sw * lambda * (sp[i] - sm[i]) / (2.0 * de);
        let j_l = sw * s[i];
        jtj[0][0] += j_e * j_e;
        jtj[0][1] += j_e * j_l;
        jtj[1][1] += j_l * j_l;
        let r = sw * (y[i] - lambda * s[i]);
        rtr += r * r;
    }
    jtj[1][0] = jtj[0][1];
    let chi2_red = rtr / (n as f64 - 2.0).max(1.0);
    let covariance = match invert_2x2(jtj) {
        Some(inv) => {
            let mut c = inv;
            for row in &mut c {
                for v in row.iter_mut() {
                    *v *= chi2_red;
                }
            }
            c
        }
        None => [[f64::INFINITY; 2]; 2],
    };

    let result = SpectrumFitResult {
        e_b,
        e_b_sigma: covariance[0][0].max(0.0).sqrt(),
        lambda,
        lambda_sigma: covariance[1][1].max(0.0).sqrt(),
        covariance,
        residual_norm: rtr.sqrt(),
        n_iterations,
        converged,
    };

    if e_b <= E_B_LOWER * (1.0 + 1e-9) || e_b >= E_B_UPPER * (1.0 - 1e-9) {
        return Err(FitError::Boundary {
            parameter: "E_b",
            best: Box::new(result),
        });
    }
    if lambda == 0.0 || lambda >= LAMBDA_UPPER {
        return Err(FitError::Boundary {
            parameter: "lambda",
            best: Box::new(result),
        });
    }
    if !converged || !(result.e_b_sigma < result.e_b) {
        // a 1σ band reaching zero means the data do not identify E_b
        // (λ ≈ 0 data lands here)
        return Err(FitError::SpectrumNotConverged {
            best: Box::new(result),
        });
    }
    Ok(result)
}

/// Binding energies predicted at the data fields for trial (B₀, ΔB);
/// `None` when any point loses its bound state.
fn resonance_model(
    points: &[FieldPoint],
    template: &ResonanceParams,
    b0: f64,
    delta_b: f64,
) -> Option<Vec<f64>> {
    let mut params = template.clone();
    params.b0 = b0;
    params.delta_b = delta_b;
    points
        .iter()
        .map(|p| binding_energy_from_field(p.b, &params).ok())
        .collect()
}

/// Linear initialization of (B₀, ΔB): with x = a_bg/(a_i − a_bg) the model
/// reads B_i = B₀ − ΔB·x_i, a plain linear regression.
fn resonance_linear_init(points: &[FieldPoint], template: &ResonanceParams) -> Option<(f64, f64)> {
    let a_bg = template.a_bg;
    let mut sx = 0.0;
    let mut sxx = 0.0;
    let mut sy = 0.0;
    let mut sxy = 0.0;
    let n = points.len() as f64;
    for p in points {
        let a = crate::resonance::length_from_binding_energy(p.e_b, &template.pair).ok()?;
        if a == a_bg {
            return None;
        }
        let x = a_bg / (a - a_bg);
        sx += x;
        sxx += x * x;
        sy += p.b;
        sxy += x * p.b;
    }
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / det; // −ΔB
    let intercept = (sy - slope * sx) / n; // B₀
    Some((intercept, -slope))
}

/// Weighted least-squares fit of (B₀, ΔB) to binding-energy-vs-field data.
pub fn fit_resonance(
    points: &[FieldPoint],
    template: &ResonanceParams,
) -> Result<ResonanceFitResult, FitError> {
    let n = points.len();
    if n < 3 {
        return Err(FitError::TooFewPoints {
            what: "field points",
            needed: 3,
            got: n,
        });
    }
    for p in points {
        if !(p.e_b > 0.0) {
            return Err(FitError::Degenerate("binding energies must be positive"));
        }
        if !(p.sigma > 0.0) {
            return Err(FitError::Degenerate("uncertainties must be positive"));
        }
    }
    let w: Vec<f64> = points.iter().map(|p| 1.0 / (p.sigma * p.sigma)).collect();
    let y: Vec<f64> = points.iter().map(|p| p.e_b).collect();

    let (b0_init, db_init) =
        resonance_linear_init(points, template).unwrap_or((template.b0, template.delta_b));

    // all points must sit on one side of the pole with a bound state
    let side_init = points[0].b - b0_init;
    for (index, p) in points.iter().enumerate() {
        let mut check = template.clone();
        check.b0 = b0_init;
        check.delta_b = db_init;
        match scattering_length(p.b, &check) {
            Ok(a) if a > 0.0 && (p.b - b0_init) * side_init > 0.0 => {}
            _ => return Err(FitError::InvalidBranch { index }),
        }
    }

    let scales = [b0_init.abs().max(1e-12), db_init.abs().max(1e-12)];
    let mut theta = [b0_init / scales[0], db_init / scales[1]];

    let eval = |theta: &[f64; 2]| -> Option<Vec<f64>> {
        resonance_model(points, template, theta[0] * scales[0], theta[1] * scales[1])
    };
    let cost_of = |model_y: &[f64]| -> f64 {
        let mut c = 0.0;
        for i in 0..n {
            let r = model_y[i] - y[i];
            c += w[i] * r * r;
        }
        c
    };

    let mut model_y = eval(&theta).ok_or(FitError::InvalidBranch { index: 0 })?;
    let mut cost = cost_of(&model_y);
    let mut mu = 1e-3;
    let mut n_iterations = 0;
    let mut converged = false;

    let jacobian = |theta: &[f64; 2]| -> Option<Vec<[f64; 2]>> {
        let mut jac = vec![[0.0_f64; 2]; n];
        for k in 0..2 {
            let step = FD_REL_STEP * theta[k].abs().max(1e-8);
            let mut tp = *theta;
            tp[k] += step;
            let mut tm = *theta;
            tm[k] -= step;
            let (yp, ym) = (eval(&tp)?, eval(&tm)?);
            for i in 0..n {
                jac[i][k] = (yp[i] - ym[i]) / (2.0 * step);
            }
        }
        Some(jac)
    };

    for _ in 0..MAX_ITER {
        n_iterations += 1;

        let Some(jac) = jacobian(&theta) else {
            break;
        };
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for i in 0..n {
            let r = model_y[i] - y[i];
            for k in 0..2 {
                jtr[k] += w[i] * jac[i][k] * r;
                for l in 0..2 {
                    jtj[k][l] += w[i] * jac[i][k] * jac[i][l];
                }
            }
        }
        let grad_norm = (jtr[0] * jtr[0] + jtr[1] * jtr[1]).sqrt();
        if grad_norm < GRAD_TOL {
            converged = true;
            break;
        }

        let mut accepted = false;
        let mut last_step = f64::INFINITY;
        for _ in 0..60 {
            let damped = [
                [jtj[0][0] * (1.0 + mu), jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + mu)],
            ];
            let Some(delta) = solve_2x2(damped, [-jtr[0], -jtr[1]]) else {
                mu *= 10.0;
                if mu > 1e15 {
                    break;
                }
                continue;
            };
            last_step = delta[0].abs().max(delta[1].abs());
            let trial = [theta[0] + delta[0], theta[1] + delta[1]];
            let Some(trial_y) = eval(&trial) else {
                mu *= 10.0;
                if mu > 1e15 {
                    break;
                }
                continue;
            };
            let trial_cost = cost_of(&trial_y);
            if trial_cost < cost {
                let rel_change = (0..2)
                    .map(|k| (trial[k] - theta[k]).abs() / theta[k].abs().max(1e-30))
                    .fold(0.0, f64::max);
                theta = trial;
                model_y = trial_y;
                cost = trial_cost;
                mu = (mu * 0.3).max(1e-14);
                accepted = true;
                if rel_change < PARAM_TOL {
                    converged = true;
                }
                break;
            }
            mu *= 10.0;
            if mu > 1e15 {
                break;
            }
        }
        if !accepted {
            converged = last_step < PARAM_TOL;
            break;
        }
        if converged {
            break;
        }
    }

    // covariance at the optimum, propagated to physical units
    let mut covariance = [[f64::INFINITY; 2]; 2];
    if let Some(jac) = jacobian(&theta) {
        let mut jtj = [[0.0; 2]; 2];
        for i in 0..n {
            for k in 0..2 {
                for l in 0..2 {
                    jtj[k][l] += w[i] * jac[i][k] * jac[i][l];
                }
            }
        }
        if let Some(inv) = invert_2x2(jtj) {
            let chi2_red = cost / (n as f64 - 2.0).max(1.0);
            for k in 0..2 {
                for l in 0..2 {
                    covariance[k][l] = inv[k][l] * chi2_red * scales[k] * scales[l];
                }
            }
        }
    }

    let result = ResonanceFitResult {
        b0: theta[0] * scales[0],
        b0_sigma: covariance[0][0].max(0.0).sqrt(),
        delta_b: theta[1] * scales[1],
        delta_b_sigma: covariance[1][1].max(0.0).sqrt(),
        covariance,
        residual_norm: cost.sqrt(),
        n_iterations,
        converged,
    };
    if !converged {
        return Err(FitError::ResonanceNotConverged {
            best: Box::new(result),
        });
    }
    Ok(result)
}

/// Alternate per-field spectrum fits with a resonance fit until the width
/// feeding χ stops moving (< 1 mG change) or 20 rounds pass.
pub fn self_consistent_chi_iteration(
    data: &[FieldSpectrum],
    model: &SpectrumModel,
) -> Result<SelfConsistentResult, FitError> {
    if data.len() < 2 {
        return Err(FitError::TooFewPoints {
            what: "field spectra",
            needed: 2,
            got: data.len(),
        });
    }
    for (i, a) in data.iter().enumerate() {
        for b in data.iter().skip(i + 1) {
            if a.b == b.b {
                return Err(FitError::Degenerate("fields must be distinct"));
            }
        }
    }

    const DELTA_B_TOL: f64 = 1e-7; // 1 mG in T
    let mut params = model.resonance.clone();
    let mut trace = Vec::new();
    let mut carry: Vec<Option<(f64, f64)>> = vec![None; data.len()];

    for round in 1..=20 {
        let mut fits = Vec::with_capacity(data.len());
        let mut points = Vec::with_capacity(data.len());
        for (i, fs) in data.iter().enumerate() {
            let mut m = model.clone();
            m.resonance = params.clone();
            let fit = fit_spectrum(&fs.spectrum, &m, carry[i])?;
            carry[i] = Some((fit.e_b, fit.lambda));
            let sigma = if fit.e_b_sigma.is_finite() && fit.e_b_sigma > 0.0 {
                fit.e_b_sigma
            } else {
                1e-12 * fit.e_b
            };
            points.push(FieldPoint {
                b: fs.b,
                e_b: fit.e_b,
                sigma,
            });
            fits.push(fit);
        }
        let res = fit_resonance(&points, &params)?;
        let change = (res.delta_b - params.delta_b).abs();
        params.b0 = res.b0;
        params.delta_b = res.delta_b;
        trace.push(res.delta_b);
        if change < DELTA_B_TOL {
            return Ok(SelfConsistentResult {
                params,
                rounds: round,
                delta_b_trace: trace,
                spectrum_fits: fits,
                resonance_fit: res,
            });
        }
    }
    Err(FitError::IterationDiverged { trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::K_B;
    use crate::spectrum::{compute_spectrum, SpectrumPoint};
    use crate::trap::{effective_trap, TrapConfig};
    use approx::assert_relative_eq;
    use core::f64::consts::TAU;

    fn paper_model() -> SpectrumModel {
        SpectrumModel::new(
            MixtureState::new(5e5, 2.5e5, 730e-9).unwrap(),
            effective_trap(&TrapConfig::isotropic(TAU * 244.0, TAU * 335.0).unwrap()),
            PulseParams::new(TAU * 45e3, 25e-6, 8.0e7 * PLANCK_H).unwrap(),
            ResonanceParams::k40_rb87_default(),
        )
    }

    /// Synthetic spectrum with multiplicative Gaussian noise.
    fn noisy(
        model: &SpectrumModel,
        e_b: f64,
        lambda: f64,
        n: usize,
        noise: f64,
        seed: u64,
    ) -> Spectrum {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let clean = synthetic(model, e_b, lambda, n);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        Spectrum::new(
            clean
                .points()
                .iter()
                .map(|p| {
                    let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    SpectrumPoint {
                        frequency: p.frequency,
                        molecule_number: p.molecule_number * (1.0 + noise * z),
                        uncertainty: None,
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    /// Noiseless synthetic spectrum on a grid bracketing the peak.
    fn synthetic(model: &SpectrumModel, e_b: f64, lambda: f64, n: usize) -> Spectrum {
        let kt_hz = K_B * model.mix.temperature / PLANCK_H;
        let edge = model.pulse.atomic_line() + e_b / PLANCK_H;
        let grid: Vec<f64> = (0..n)
            .map(|i| edge - 1.5 * kt_hz + i as f64 * 7.5 * kt_hz / n as f64)
            .collect();
        let cfg = model.config_at(e_b, lambda).unwrap();
        compute_spectrum(&grid, &cfg).unwrap()
    }

    #[test]
    fn initial_guess_close_on_noiseless_data() {
        let model = paper_model();
        let truth = 60e3 * PLANCK_H;
        let data = synthetic(&model, truth, 1.0, 60);
        let (e0, l0) = initial_guess(&data, &model).unwrap();
        assert!((e0 - truth).abs() < 15e3 * PLANCK_H, "guess {e0:e}");
        assert!(l0 > 0.2 && l0 < 5.0, "lambda guess {l0}");
    }

    #[test]
    fn initial_guess_scaling() {
        let model = paper_model();
        let data = synthetic(&model, 60e3 * PLANCK_H, 1.0, 40);
        let scaled = Spectrum::new(
            data.points()
                .iter()
                .map(|p| SpectrumPoint {
                    frequency: p.frequency,
                    molecule_number: 3.0 * p.molecule_number,
                    uncertainty: None,
                })
                .collect(),
        )
        .unwrap();
        let (e1, l1) = initial_guess(&data, &model).unwrap();
        let (e2, l2) = initial_guess(&scaled, &model).unwrap();
        assert_eq!(e1, e2);
        assert_relative_eq!(l2, 3.0 * l1, max_relative = 1e-12);
    }

    #[test]
    fn initial_guess_degenerate_cases() {
        let model = paper_model();
        let flat = Spectrum::new(
            (0..10)
                .map(|i| SpectrumPoint {
                    frequency: 8.0e7 + i as f64 * 1e3,
                    molecule_number: 5.0,
                    uncertainty: None,
                })
                .collect(),
        )
        .unwrap();
        assert!(matches!(
            initial_guess(&flat, &model),
            Err(FitError::Degenerate(_))
        ));
        let few = Spectrum::new(
            (0..3)
                .map(|i| SpectrumPoint {
                    frequency: 8.0e7 + i as f64 * 1e3,
                    molecule_number: i as f64,
                    uncertainty: None,
                })
                .collect(),
        )
        .unwrap();
        assert!(matches!(
            initial_guess(&few, &model),
            Err(FitError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn noiseless_round_trip_recovers_parameters() {
        let model = paper_model();
        let truth_e = 120e3 * PLANCK_H;
        let truth_l = 2.0;
        let data = synthetic(&model, truth_e, truth_l, 40);
        let fit = fit_spectrum(&data, &model, None).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.e_b, truth_e, max_relative = 1e-6);
        assert_relative_eq!(fit.lambda, truth_l, max_relative = 1e-6);
        assert!(fit.covariance[0][1].is_finite());
        assert!(fit.e_b_sigma >= 0.0 && fit.lambda_sigma >= 0.0);
    }

    #[test]
    fn data_rescaling_moves_lambda_only() {
        let model = paper_model();
        let data = synthetic(&model, 90e3 * PLANCK_H, 1.0, 40);
        let scaled = Spectrum::new(
            data.points()
                .iter()
                .map(|p| SpectrumPoint {
                    frequency: p.frequency,
                    molecule_number: 2.5 * p.molecule_number,
                    uncertainty: None,
                })
                .collect(),
        )
        .unwrap();
        let f1 = fit_spectrum(&data, &model, None).unwrap();
        let f2 = fit_spectrum(&scaled, &model, None).unwrap();
        assert_relative_eq!(f2.lambda, 2.5 * f1.lambda, max_relative = 1e-8);
        assert_relative_eq!(f2.e_b, f1.e_b, max_relative = 1e-8);
    }

    #[test]
    fn all_zero_data_is_flagged() {
        let model = paper_model();
        let zeros = Spectrum::new(
            (0..20)
                .map(|i| SpectrumPoint {
                    frequency: 8.0e7 + 100e3 + i as f64 * 2e3,
                    molecule_number: if i % 2 == 0 { 1e-9 } else { -1e-9 },
                    uncertainty: Some(1.0),
                })
                .collect(),
        )
        .unwrap();
        let err = fit_spectrum(&zeros, &model, Some((100e3 * PLANCK_H, 1.0))).unwrap_err();
        assert!(matches!(
            err,
            FitError::Boundary { .. } | FitError::SpectrumNotConverged { .. }
        ));
    }

    fn paper_fields() -> [f64; 6] {
        [545.73e-4, 545.83e-4, 545.92e-4, 546.01e-4, 546.10e-4, 546.19e-4]
    }

    #[test]
    fn resonance_noiseless_exact_recovery() {
        let truth = ResonanceParams::k40_rb87_default();
        let points: Vec<FieldPoint> = paper_fields()
            .iter()
            .map(|&b| FieldPoint {
                b,
                e_b: binding_energy_from_field(b, &truth).unwrap(),
                sigma: 0.6e3 * PLANCK_H,
            })
            .collect();
        // seed with perturbed template: the linear init must still land
        let mut seed = truth.clone();
        seed.b0 += 0.2e-4;
        seed.delta_b *= 1.5;
        let fit = fit_resonance(&points, &seed).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.b0, truth.b0, max_relative = 1e-8);
        assert_relative_eq!(fit.delta_b, truth.delta_b, max_relative = 1e-8);
        assert!(fit.b0_sigma >= 0.0 && fit.delta_b_sigma >= 0.0);
    }

    #[test]
    fn resonance_normal_equations_hold_at_optimum() {
        let truth = ResonanceParams::k40_rb87_default();
        // deterministic pseudo-noise, ±1%
        let points: Vec<FieldPoint> = paper_fields()
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let e = binding_energy_from_field(b, &truth).unwrap();
                let bump = 1.0 + 0.01 * ((i as f64 * 2.399).sin());
                FieldPoint {
                    b,
                    e_b: e * bump,
                    sigma: 0.01 * e,
                }
            })
            .collect();
        let fit = fit_resonance(&points, &truth).unwrap();

        // residuals orthogonal to Jacobian columns at the optimum
        let mut params = truth.clone();
        params.b0 = fit.b0;
        params.delta_b = fit.delta_b;
        let h_b = 1e-9;
        let mut jtr = [0.0_f64; 2];
        let mut jnorm = [0.0_f64; 2];
        let mut rnorm = 0.0_f64;
        for p in &points {
            let w = 1.0 / (p.sigma * p.sigma);
            let e0 = binding_energy_from_field(p.b, &params).unwrap();
            let mut pp = params.clone();
            pp.b0 += h_b;
            let mut pm = params.clone();
            pm.b0 -= h_b;
            let d_b0 = (binding_energy_from_field(p.b, &pp).unwrap()
                - binding_energy_from_field(p.b, &pm).unwrap())
                / (2.0 * h_b);
            let mut pp = params.clone();
            pp.delta_b += h_b;
            let mut pm = params.clone();
            pm.delta_b -= h_b;
            let d_db = (binding_energy_from_field(p.b, &pp).unwrap()
                - binding_energy_from_field(p.b, &pm).unwrap())
                / (2.0 * h_b);
            let r = e0 - p.e_b;
            jtr[0] += w * d_b0 * r;
            jtr[1] += w * d_db * r;
            jnorm[0] += w * d_b0 * d_b0;
            jnorm[1] += w * d_db * d_db;
            rnorm += w * r * r;
        }
        for k in 0..2 {
            let cos = jtr[k].abs() / (jnorm[k].sqrt() * rnorm.sqrt());
            assert!(cos < 1e-6, "normal equation violated: cos {cos:e}");
        }
    }

    #[test]
    fn resonance_too_few_points() {
        let truth = ResonanceParams::k40_rb87_default();
        let points: Vec<FieldPoint> = paper_fields()[..2]
            .iter()
            .map(|&b| FieldPoint {
                b,
                e_b: binding_energy_from_field(b, &truth).unwrap(),
                sigma: 1e3 * PLANCK_H,
            })
            .collect();
        assert!(matches!(
            fit_resonance(&points, &truth),
            Err(FitError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn resonance_straddling_pole_rejected() {
        let truth = ResonanceParams::k40_rb87_default();
        let mut points: Vec<FieldPoint> = paper_fields()
            .iter()
            .map(|&b| FieldPoint {
                b,
                e_b: binding_energy_from_field(b, &truth).unwrap(),
                sigma: 1e3 * PLANCK_H,
            })
            .collect();
        // a point beyond the zero crossing on the far side of the pole
        points.push(FieldPoint {
            b: truth.b0 + 2.0 * truth.delta_b,
            e_b: binding_energy_from_field(truth.b0 + 2.0 * truth.delta_b, &truth).unwrap(),
            sigma: 1e3 * PLANCK_H,
        });
        assert!(matches!(
            fit_resonance(&points, &truth),
            Err(FitError::InvalidBranch { .. })
        ));
    }

    #[test]
    fn self_consistent_idempotent_at_truth() {
        let model = paper_model();
        let fields = [545.83e-4, 546.01e-4, 546.19e-4];
        let data: Vec<FieldSpectrum> = fields
            .iter()
            .map(|&b| {
                let e_b = binding_energy_from_field(b, &model.resonance).unwrap();
                FieldSpectrum {
                    b,
                    spectrum: synthetic(&model, e_b, 1.0, 30),
                }
            })
            .collect();
        let out = self_consistent_chi_iteration(&data, &model).unwrap();
        assert_eq!(out.rounds, 1, "seed at truth must settle immediately");
        assert_relative_eq!(out.params.delta_b, model.resonance.delta_b, max_relative = 1e-3);
        assert_relative_eq!(out.params.b0, model.resonance.b0, max_relative = 1e-6);
    }

    #[test]
    fn self_consistent_basin_from_doubled_width_seed() {
        // data generated at the true parameters; seeding the loop with a
        // width off by x2 must still land on the same fixed point quickly
        let truth_model = paper_model();
        let fields = [545.73e-4, 545.92e-4, 546.10e-4];
        let data: Vec<FieldSpectrum> = fields
            .iter()
            .map(|&b| {
                let e_b = binding_energy_from_field(b, &truth_model.resonance).unwrap();
                FieldSpectrum {
                    b,
                    spectrum: synthetic(&truth_model, e_b, 1.0, 30),
                }
            })
            .collect();

        let mut seeded = truth_model.clone();
        seeded.resonance.delta_b *= 2.0;
        let out = self_consistent_chi_iteration(&data, &seeded).unwrap();
        assert!(out.rounds <= 5, "took {} rounds", out.rounds);
        assert!(
            (out.params.delta_b - truth_model.resonance.delta_b).abs() < 0.02e-4,
            "delta_b off by {:.3} mG",
            (out.params.delta_b - truth_model.resonance.delta_b).abs() * 1e7
        );

        // same fixed point as the truth-seeded run
        let from_truth = self_consistent_chi_iteration(&data, &truth_model).unwrap();
        assert!((out.params.delta_b - from_truth.params.delta_b).abs() < 1e-7);
        assert!((out.params.b0 - from_truth.params.b0).abs() < 1e-8);
    }

    #[test]
    fn uncertainties_shrink_with_point_count() {
        // 1σ(E_b) scales as 1/√N: ratio between N = 20 and N = 80 is
        // 2 ± 0.3 on synthetic ensembles
        let model = paper_model();
        let truth_e = 80e3 * PLANCK_H;
        let sigma_at = |n_points: usize| -> f64 {
            let mut sigmas = Vec::new();
            for seed in 0..15u64 {
                let data = noisy(&model, truth_e, 1.0, n_points, 0.05, 500 + seed);
                let fit = fit_spectrum(&data, &model, None).unwrap();
                sigmas.push(fit.e_b_sigma);
            }
            sigmas.sort_by(f64::total_cmp);
            sigmas[sigmas.len() / 2]
        };
        let ratio = sigma_at(20) / sigma_at(80);
        assert!(
            (1.7..=2.3).contains(&ratio),
            "sigma ratio between N=20 and N=80: {ratio:.3}"
        );
    }

    #[test]
    fn self_consistent_needs_two_fields() {
        let model = paper_model();
        let data = [FieldSpectrum {
            b: 545.9e-4,
            spectrum: synthetic(&model, 60e3 * PLANCK_H, 1.0, 20),
        }];
        assert!(matches!(
            self_consistent_chi_iteration(&data, &model),
            Err(FitError::TooFewPoints { .. })
        ));
    }
}
