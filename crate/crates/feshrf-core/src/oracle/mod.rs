//! Independent validation: classical Monte Carlo sampling of thermal atom
//! pairs (checking the relative/center-of-mass separation behind the pair
//! statistics) and a reference integrator for the spectrum, deliberately
//! built from its own formula expressions and a different quadrature
//! family (adaptive Simpson with Richardson correction) than the engine's
//! nested Gauss rules.
//!
//! Sampling is classical — Gaussian positions and momenta per axis — which
//! is exact in the thermodynamic limit used by the model (k_BT/ħω̃ ≈ 53 at
//! the reference conditions). The s-wave restriction entering h(ε_r) is a
//! quantum selection rule and is validated analytically in the trap
//! module, not by sampling; the Monte Carlo checks the Gamma(3) energy
//! marginals and the energy bookkeeping of the coordinate transform.
//!
//! RNG: ChaCha12, seeded once per fixed-size chunk via independent
//! streams, so the sample stream is reproducible across platforms and
//! independent of how chunks are scheduled.

pub mod stats;

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::constants::{HBAR, K_B};
use crate::error::{Error, Result};
use crate::species::SpeciesPair;
use crate::spectrum::ModelConfig;
use crate::trap::{effective_trap, TrapConfig};
use stats::{chi_square_p_value, gamma3_quantile, pearson};

/// Samples per RNG stream; fixed so results never depend on how many
/// chunks are processed in parallel.
pub const SAMPLE_CHUNK: usize = 1 << 16;

/// Energies of one sampled atom pair (J).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    /// Relative-motion energy p²/2µ + (µ/2)Σω̄ᵢ²rᵢ².
    pub eps_rel: f64,
    /// Center-of-mass energy P²/2M + (M/2)Σω̄ᵢ²Rᵢ².
    pub eps_cm: f64,
    /// eps_rel + eps_cm.
    pub eps_total: f64,
    /// Sum of the two single-atom energies; differs from eps_total by the
    /// neglected coupling term, which vanishes for matched frequencies.
    pub eps_atoms: f64,
}

/// What to sample: per-species trap, masses, temperature (K).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub trap: TrapConfig,
    pub pair: SpeciesPair,
    pub temperature: f64,
}

impl SampleConfig {
    /// Matched-frequency configuration: both species on the effective
    /// ω̄ᵢ oscillators. This is the system the pair statistics actually
    /// describe (coupling dropped), so it is what the goodness-of-fit
    /// checks run against.
    pub fn matched(trap: &TrapConfig, pair: SpeciesPair, temperature: f64) -> Self {
        let eff = effective_trap(trap);
        Self {
            trap: TrapConfig {
                omega_a: eff.omega_bar,
                omega_b: eff.omega_bar,
            },
            pair,
            temperature,
        }
    }
}

/// Draw `count` pairs from stream `chunk_index` of the master seed.
pub fn sample_chunk(
    cfg: &SampleConfig,
    master_seed: u64,
    chunk_index: u64,
    count: usize,
) -> Vec<PairSample> {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(chunk_index);

    let kt = K_B * cfg.temperature;
    let (m_a, m_b) = (cfg.pair.mass_a, cfg.pair.mass_b);
    let m_tot = cfg.pair.total_mass;
    let mu = cfg.pair.reduced_mass;
    let eff = effective_trap(&cfg.trap);

    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut eps_atoms = 0.0;
        let mut eps_rel = 0.0;
        let mut eps_cm = 0.0;
        for i in 0..3 {
            let (wa, wb, wbar) = (cfg.trap.omega_a[i], cfg.trap.omega_b[i], eff.omega_bar[i]);
            // position sd √(kT/m)/ω, momentum sd √(m·kT) per axis
            let x_a = (kt / m_a).sqrt() / wa * rng.sample::<f64, _>(StandardNormal);
            let p_a = (m_a * kt).sqrt() * rng.sample::<f64, _>(StandardNormal);
            let x_b = (kt / m_b).sqrt() / wb * rng.sample::<f64, _>(StandardNormal);
            let p_b = (m_b * kt).sqrt() * rng.sample::<f64, _>(StandardNormal);

            eps_atoms += p_a * p_a / (2.0 * m_a)
                + 0.5 * m_a * wa * wa * x_a * x_a
                + p_b * p_b / (2.0 * m_b)
                + 0.5 * m_b * wb * wb * x_b * x_b;

            let r = x_a - x_b;
            let p_rel = mu * (p_a / m_a - p_b / m_b);
            let big_r = (m_a * x_a + m_b * x_b) / m_tot;
            let big_p = p_a + p_b;

            eps_rel += p_rel * p_rel / (2.0 * mu) + 0.5 * mu * wbar * wbar * r * r;
            eps_cm += big_p * big_p / (2.0 * m_tot) + 0.5 * m_tot * wbar * wbar * big_r * big_r;
        }
        out.push(PairSample {
            eps_rel,
            eps_cm,
            eps_total: eps_rel + eps_cm,
            eps_atoms,
        });
    }
    out
}

/// Draw `n` pairs deterministically from the master seed, chunked into
/// [`SAMPLE_CHUNK`]-sized substreams.
pub fn sample_pairs(n: usize, cfg: &SampleConfig, master_seed: u64) -> Vec<PairSample> {
    let mut out = Vec::with_capacity(n);
    let mut chunk_index = 0u64;
    let mut remaining = n;
    while remaining > 0 {
        let take = remaining.min(SAMPLE_CHUNK);
        out.extend(sample_chunk(cfg, master_seed, chunk_index, take));
        remaining -= take;
        chunk_index += 1;
    }
    out
}

/// Chi-square comparison of an empirical energy sample against the
/// analytic Gamma(3, k_BT) density.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramReport {
    /// Bin edges (J); first 0, last +∞. Interior edges are equal-probability
    /// quantiles of the expected density.
    pub bin_edges: Vec<f64>,
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
}

const MIN_GOF_SAMPLES: usize = 10_000;

fn energy_gof(energies: &[f64], temperature: f64, bins: usize) -> Result<HistogramReport> {
    if energies.len() < MIN_GOF_SAMPLES {
        return Err(Error::TooFew {
            what: "samples",
            needed: MIN_GOF_SAMPLES,
            got: energies.len(),
        });
    }
    if bins < 4 {
        return Err(Error::Domain("need at least 4 histogram bins"));
    }
    let kt = crate::units::thermal_energy(temperature)?;

    // equal-probability bins of Gamma(3): expected count is uniform
    let mut edges = Vec::with_capacity(bins + 1);
    edges.push(0.0);
    for j in 1..bins {
        edges.push(kt * gamma3_quantile(j as f64 / bins as f64));
    }
    edges.push(f64::INFINITY);

    let mut observed = alloc::vec![0u64; bins];
    for &e in energies {
        // first interior edge above e gives the bin index
        let idx = edges[1..bins].partition_point(|&edge| edge <= e);
        observed[idx] += 1;
    }

    let n = energies.len() as f64;
    let expected_per_bin = n / bins as f64;
    let expected = alloc::vec![expected_per_bin; bins];
    let mut statistic = 0.0;
    for &obs in &observed {
        let d = obs as f64 - expected_per_bin;
        statistic += d * d / expected_per_bin;
    }
    let dof = bins - 1;
    Ok(HistogramReport {
        bin_edges: edges,
        observed,
        expected,
        statistic,
        p_value: chi_square_p_value(statistic, dof),
        dof,
    })
}

/// Goodness of fit of the relative-motion energy marginal against
/// ε² e^(−ε/k_BT)/(2(k_BT)³).
///
/// This checks the ε² density of states and the Boltzmann factor of the
/// full (all partial waves) relative motion — not the s-wave-restricted
/// h(ε_r), whose flat density is a quantum selection validated
/// analytically.
pub fn relative_energy_gof(
    samples: &[PairSample],
    temperature: f64,
    bins: usize,
) -> Result<HistogramReport> {
    let e: Vec<f64> = samples.iter().map(|s| s.eps_rel).collect();
    energy_gof(&e, temperature, bins)
}

/// Same comparison for the center-of-mass energy marginal.
pub fn cm_energy_gof(
    samples: &[PairSample],
    temperature: f64,
    bins: usize,
) -> Result<HistogramReport> {
    let e: Vec<f64> = samples.iter().map(|s| s.eps_cm).collect();
    energy_gof(&e, temperature, bins)
}

/// Pearson correlation between the relative and center-of-mass energies;
/// consistent with zero (|r| ≲ 3/√n) when the per-axis frequencies match.
pub fn rel_cm_correlation(samples: &[PairSample]) -> Result<f64> {
    let xs: Vec<f64> = samples.iter().map(|s| s.eps_rel).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.eps_cm).collect();
    pearson(&xs, &ys)
}

/// Largest relative violation of ε_a + ε_b = ε_rel + ε_cm over the sample;
/// zero up to roundoff when the species see identical frequencies.
pub fn max_energy_identity_violation(samples: &[PairSample]) -> f64 {
    samples
        .iter()
        .map(|s| (s.eps_atoms - s.eps_total).abs() / s.eps_atoms.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------
// reference integrator
// ---------------------------------------------------------------------

/// Adaptive Simpson with Richardson correction; `None` when the depth
/// limit is hit before the local tolerance is met.
#[allow(clippy::too_many_arguments)]
fn simpson_refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: usize,
) -> Option<f64> {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * eps {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let l = simpson_refine(f, a, fa, lm, flm, m, fm, left, 0.5 * eps, depth - 1)?;
    let r = simpson_refine(f, m, fm, rm, frm, b, fb, right, 0.5 * eps, depth - 1)?;
    Some(l + r)
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, eps: f64) -> Option<f64> {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_refine(f, a, fa, m, fm, b, fb, whole, eps, 52)
}

/// Reference evaluation of the molecule number, independent of the
/// spectrum engine: the integrand is assembled here from its own formula
/// expressions and integrated by adaptive Simpson with splits at the
/// Gaussian center and wings. Used to pin golden values and cross-check
/// the engine.
pub fn reference_integral(nu: f64, cfg: &ModelConfig, rel_tol: f64) -> Result<f64> {
    if !(1e-12..=1e-4).contains(&rel_tol) {
        return Err(Error::Domain("reference tolerance must lie in [1e-12, 1e-4]"));
    }
    let omega_tau = cfg.pulse.rabi * cfg.pulse.tau;
    let prefactor = cfg.lambda * core::f64::consts::FRAC_PI_2 * omega_tau * omega_tau;
    if prefactor == 0.0 {
        return Ok(0.0);
    }

    let kt = K_B * cfg.mix.temperature;
    let hw = HBAR * cfg.trap.omega_tilde;
    let pair_density_scale = cfg.mix.n_a * cfg.mix.n_b * hw * hw / (2.0 * kt * kt * kt);
    let fc_scale = hw
        * cfg.bound.chi
        * (2.0 / core::f64::consts::PI)
        * (1.0 - cfg.bound.a_prime / cfg.bound.a) * (1.0 - cfg.bound.a_prime / cfg.bound.a);
    let (e_b, e_bp) = (cfg.bound.e_b, cfg.bound.e_b_prime);
    let sqrt_e_b = e_b.sqrt();

    let delta = crate::constants::PLANCK_H * nu - cfg.pulse.e0 - e_b;
    let tau_over_hbar = cfg.pulse.tau / HBAR;
    let integrand = move |eps: f64| {
        let arg = (delta - eps) * tau_over_hbar;
        pair_density_scale
            * (-eps / kt).exp()
            * (-arg * arg).exp()
            * fc_scale
            * (eps.sqrt() * sqrt_e_b * e_bp / ((eps + e_b) * (eps + e_b) * (eps + e_bp)))
    };

    // panels split at the Gaussian center and ±8ħ/τ wings, as in the model
    // definition of the integration domain
    let width = 8.0 * HBAR / cfg.pulse.tau;
    let hi = (30.0 * kt).max(delta + width);
    let mut cuts = [
        0.0,
        (delta - width).max(0.0),
        delta.max(0.0),
        (delta + width).clamp(0.0, hi),
        hi,
    ];
    cuts.sort_unstable_by(f64::total_cmp);

    // coarse composite pass to set the absolute error budget
    let mut rough = 0.0;
    for w in cuts.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let step = (w[1] - w[0]) / 64.0;
        let mut acc = 0.0;
        for i in 0..64 {
            let a = w[0] + i as f64 * step;
            let b = a + step;
            acc += step / 6.0 * (integrand(a) + 4.0 * integrand(0.5 * (a + b)) + integrand(b));
        }
        rough += acc;
    }
    if rough == 0.0 {
        return Ok(0.0);
    }

    let eps_total = (rel_tol * rough.abs()).max(1e-300);
    let n_panels = cuts.windows(2).filter(|w| w[1] > w[0]).count().max(1);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        total += adaptive_simpson(&integrand, w[0], w[1], eps_total / n_panels as f64)
            .ok_or(Error::QuadratureNonConvergence {
                achieved: f64::NAN,
                requested: rel_tol,
                estimate: prefactor * rough,
            })?;
    }
    Ok(prefactor * total)
}

/// Engine-vs-reference comparison across a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineComparison {
    /// Worst |engine − reference| / (2·rel_tol·max(|engine|, |reference|))
    /// over the grid; agreement means ≤ 1.
    pub worst_ratio: f64,
    pub worst_frequency: f64,
    pub rel_tol: f64,
    pub ok: bool,
}

/// Evaluate both integration routes at the same tolerance on every grid
/// point and check the combined-tolerance bound |Δ| ≤ 2·rel_tol·value.
pub fn compare_engine_reference(
    grid: &[f64],
    cfg: &ModelConfig,
    rel_tol: f64,
) -> Result<EngineComparison> {
    let mut engine_cfg = cfg.clone();
    engine_cfg.quad.rel_tol = rel_tol;
    let mut worst_ratio = 0.0;
    let mut worst_frequency = f64::NAN;
    for &nu in grid {
        let e = crate::spectrum::molecule_number(nu, &engine_cfg)?;
        let r = reference_integral(nu, cfg, rel_tol)?;
        let scale = e.abs().max(r.abs());
        let ratio = if scale > 0.0 {
            (e - r).abs() / (2.0 * rel_tol * scale)
        } else {
            0.0
        };
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst_frequency = nu;
        }
    }
    Ok(EngineComparison {
        worst_ratio,
        worst_frequency,
        rel_tol,
        ok: worst_ratio <= 1.0,
    })
}
