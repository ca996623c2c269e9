//! Closed-form convergence and consensus bounds: contraction parameters per
//! algorithm, reduction-property classification, convergence rate and
//! radius, normalized consensus diameter, gradient bounds, and the
//! verification predicates for the supporting lemmas.

use nalgebra::DVector;
use serde::Serialize;

use crate::engine::AlgorithmKind;
use crate::error::{Error, Result};
use crate::functions::MinimizerGeometry;

/// Admissible `(gamma, alpha)` regimes guaranteeing `beta sqrt(gamma) < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReductionType {
    TypeI,
    TypeII,
    Invalid,
}

/// The bound bundle computed for one configured `(algorithm, alpha)` cell.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryBounds {
    pub beta: f64,
    pub gamma: f64,
    #[serde(skip)]
    pub x_c: DVector<f64>,
    pub r_c: f64,
    pub r_star: Option<f64>,
    pub rate: Option<f64>,
    pub gradient_bound: Option<f64>,
    /// Gradient bound is contraction-only (no mixing-dynamics guarantee).
    pub contraction_only: bool,
    pub d_star_normalized: Option<f64>,
    /// Absolute consensus diameter, available only when the consensus
    /// constants `rho` and `lambda` are supplied.
    pub d_star: Option<f64>,
    pub reduction: ReductionType,
}

/// `beta = sqrt(1 - alpha mu_tilde)`.
pub fn beta(alpha: f64, mu_tilde: f64) -> Result<f64> {
    let a = alpha * mu_tilde;
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::domain(format!(
            "alpha * mu_tilde = {a} outside [0, 1]"
        )));
    }
    Ok((1.0 - a).sqrt())
}

/// Contraction center, factor, and required robustness for an algorithm.
/// The center is the enclosing-ball center for CWTM/RVO and the auxiliary
/// consensus estimate for SDMMFD/SDFD (empirical, supplied by the caller).
pub fn algorithm_params(
    kind: AlgorithmKind,
    d: usize,
    f: usize,
    geometry: &MinimizerGeometry,
    y_inf: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, f64, usize)> {
    let robustness = kind.required_robustness(d, f);
    match kind {
        AlgorithmKind::Cwtm => Ok((geometry.c_star.clone(), d as f64, robustness)),
        AlgorithmKind::Rvo => Ok((geometry.c_star.clone(), 1.0, robustness)),
        AlgorithmKind::Sdmmfd | AlgorithmKind::Sdfd => {
            let y = y_inf.ok_or_else(|| {
                Error::state("auxiliary consensus estimate required for this algorithm")
            })?;
            Ok((y.clone(), 1.0, robustness))
        }
    }
}

/// Classifies `(gamma, alpha)` against the two admissible regimes.
pub fn classify_reduction(gamma: f64, alpha: f64, mu_tilde: f64, l_tilde: f64) -> ReductionType {
    debug_assert!(mu_tilde > 0.0 && l_tilde >= mu_tilde);
    if !(alpha > 0.0 && alpha <= 1.0 / l_tilde) {
        return ReductionType::Invalid;
    }
    if gamma < 1.0 {
        return ReductionType::TypeI;
    }
    // Ceiling 1 / (1 - mu/L), infinite when the moduli coincide.
    let ratio = mu_tilde / l_tilde;
    let ceiling = if ratio >= 1.0 {
        f64::INFINITY
    } else {
        1.0 / (1.0 - ratio)
    };
    if gamma < ceiling && alpha > (1.0 - 1.0 / gamma) / mu_tilde {
        ReductionType::TypeII
    } else {
        ReductionType::Invalid
    }
}

fn check_rate_domain(gamma: f64, alpha_scaled: f64) -> Result<()> {
    if gamma < 0.0 {
        return Err(Error::domain(format!("gamma = {gamma} must be >= 0")));
    }
    let lower = if gamma > 1.0 { 1.0 - 1.0 / gamma } else { 0.0 };
    if !(alpha_scaled > lower && alpha_scaled <= 1.0) {
        return Err(Error::domain(format!(
            "alpha_scaled = {alpha_scaled} outside ({lower}, 1] for gamma = {gamma}"
        )));
    }
    Ok(())
}

/// `rate(gamma, alpha_scaled) = sqrt(gamma) sqrt(1 - alpha_scaled)`.
pub fn convergence_rate(gamma: f64, alpha_scaled: f64) -> Result<f64> {
    check_rate_domain(gamma, alpha_scaled)?;
    Ok(gamma.sqrt() * (1.0 - alpha_scaled).sqrt())
}

/// Normalized convergence radius
/// `sqrt(alpha_scaled) / (1 - sqrt(gamma) sqrt(1 - alpha_scaled))`;
/// multiplying by `r_c sqrt(kappa)` recovers the absolute radius.
pub fn normalized_radius(gamma: f64, alpha_scaled: f64) -> Result<f64> {
    check_rate_domain(gamma, alpha_scaled)?;
    Ok(alpha_scaled.sqrt() / (1.0 - gamma.sqrt() * (1.0 - alpha_scaled).sqrt()))
}

/// Absolute convergence radius `r_c sqrt(alpha l_tilde) / (1 - beta sqrt(gamma))`.
pub fn convergence_radius(
    r_c: f64,
    gamma: f64,
    alpha: f64,
    mu_tilde: f64,
    l_tilde: f64,
) -> Result<f64> {
    let b = beta(alpha, mu_tilde)?;
    let contraction = b * gamma.sqrt();
    if contraction >= 1.0 {
        return Err(Error::domain(format!(
            "beta sqrt(gamma) = {contraction} >= 1, no finite radius"
        )));
    }
    Ok(r_c * (alpha * l_tilde).sqrt() / (1.0 - contraction))
}

fn check_diameter_domain(kappa: f64, gamma: f64, alpha_scaled: f64) -> Result<()> {
    if kappa < 1.0 {
        return Err(Error::domain(format!("kappa = {kappa} must be >= 1")));
    }
    if gamma < 0.0 {
        return Err(Error::domain(format!("gamma = {gamma} must be >= 0")));
    }
    let gamma_ceiling = if kappa <= 1.0 {
        f64::INFINITY
    } else {
        kappa / (kappa - 1.0)
    };
    if gamma >= 1.0 && gamma >= gamma_ceiling {
        return Err(Error::domain(format!(
            "gamma = {gamma} outside [1, {gamma_ceiling}) for kappa = {kappa}"
        )));
    }
    let lower = if gamma >= 1.0 { 1.0 - 1.0 / gamma } else { 0.0 };
    if !(alpha_scaled > lower && alpha_scaled <= 1.0 / kappa) {
        return Err(Error::domain(format!(
            "alpha_scaled = {alpha_scaled} outside ({lower}, {}] for kappa = {kappa}",
            1.0 / kappa
        )));
    }
    Ok(())
}

/// Normalized approximate-consensus diameter
/// `kappa a (1 + sqrt(kappa gamma a) / (1 - sqrt(gamma) sqrt(1 - a)))`.
pub fn normalized_consensus_diameter(kappa: f64, gamma: f64, alpha_scaled: f64) -> Result<f64> {
    check_diameter_domain(kappa, gamma, alpha_scaled)?;
    let radius = normalized_radius(gamma, alpha_scaled)?;
    Ok(kappa * alpha_scaled * (1.0 + (kappa * gamma).sqrt() * radius))
}

/// Gradient-norm asymptotic bound
/// `r_c l_tilde (1 + sqrt(alpha gamma l_tilde) / (1 - beta sqrt(gamma)))`,
/// with `gamma = d` for CWTM and `gamma = 1` otherwise. SDFD carries no
/// mixing-dynamics guarantee, so its value is flagged contraction-only.
pub fn gradient_bound(
    kind: AlgorithmKind,
    r_c: f64,
    l_tilde: f64,
    mu_tilde: f64,
    alpha: f64,
    d: usize,
) -> Result<(f64, bool)> {
    let gamma = match kind {
        AlgorithmKind::Cwtm => d as f64,
        _ => 1.0,
    };
    let b = beta(alpha, mu_tilde)?;
    let contraction = b * gamma.sqrt();
    if contraction >= 1.0 {
        return Err(Error::domain(format!(
            "beta sqrt(gamma) = {contraction} >= 1, gradient bound undefined"
        )));
    }
    let value = r_c * l_tilde * (1.0 + (alpha * gamma * l_tilde).sqrt() / (1.0 - contraction));
    Ok((value, kind == AlgorithmKind::Sdfd))
}

/// Bound on the contraction-center distance `r_c` in terms of the
/// enclosing-ball radius: `sqrt(d)(r* + eps*) + r*` for the
/// auxiliary-channel algorithms, `r*` for CWTM/RVO.
pub fn r_c_bound(kind: AlgorithmKind, r_star: f64, eps_star: f64, d: usize) -> f64 {
    match kind {
        AlgorithmKind::Sdmmfd | AlgorithmKind::Sdfd => {
            (d as f64).sqrt() * (r_star + eps_star) + r_star
        }
        AlgorithmKind::Cwtm | AlgorithmKind::Rvo => r_star,
    }
}

/// True iff the global minimizer lies within `kappa * r_c` of the
/// contraction center.
pub fn check_minimizer_containment(
    geometry: &MinimizerGeometry,
    x_c: &DVector<f64>,
    r_c: f64,
    kappa: f64,
) -> bool {
    (&geometry.x_star - x_c).norm() <= kappa * r_c + 1e-9
}

/// Samples `h(s) = sqrt(s) / (1 - sqrt(gamma) sqrt(1 - s))` on its domain
/// and checks the claimed monotonicity pattern: strictly decreasing for
/// `gamma >= 1`; for `gamma < 1`, strictly increasing on `(0, 1 - gamma]`
/// then strictly decreasing on `(1 - gamma, 1]`.
pub fn check_h_monotonicity(gamma: f64, grid: usize) -> Result<bool> {
    if grid < 3 {
        return Err(Error::domain("grid must have at least 3 points"));
    }
    if gamma < 0.0 {
        return Err(Error::domain(format!("gamma = {gamma} must be >= 0")));
    }
    let lower = if gamma > 1.0 { 1.0 - 1.0 / gamma } else { 0.0 };
    let h = |s: f64| s.sqrt() / (1.0 - gamma.sqrt() * (1.0 - s).sqrt());

    let span = 1.0 - lower;
    let eps = span * 1e-6;
    let samples: Vec<f64> = (0..grid)
        .map(|i| {
            let t = (i as f64 + 1.0) / grid as f64;
            (lower + eps + (span - eps) * t).min(1.0)
        })
        .collect();

    let split = 1.0 - gamma;
    for w in samples.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        if s0 >= s1 {
            continue;
        }
        let increasing_region = gamma < 1.0 && s1 <= split + 1e-12;
        let ok = if increasing_region {
            h(s1) > h(s0)
        } else if gamma < 1.0 && s0 < split {
            // Window straddles the peak; skip the mixed interval.
            true
        } else {
            h(s1) < h(s0)
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Assembles the bound bundle for one `(algorithm, alpha)` cell. `r_c` is
/// the measured center distance (`max_i ||x_c - x_i*||`) when available,
/// otherwise the caller may pass the [`r_c_bound`] value; `rho`/`lambda`
/// unlock the absolute consensus diameter.
#[allow(clippy::too_many_arguments)]
pub fn bounds_for(
    kind: AlgorithmKind,
    d: usize,
    f: usize,
    alpha: f64,
    mu_tilde: f64,
    l_tilde: f64,
    r_c: f64,
    geometry: &MinimizerGeometry,
    y_inf: Option<&DVector<f64>>,
    rho_lambda: Option<(f64, f64)>,
) -> Result<TheoryBounds> {
    let (x_c, gamma, _) = algorithm_params(kind, d, f, geometry, y_inf)?;
    let b = beta(alpha, mu_tilde)?;
    let reduction = classify_reduction(gamma, alpha, mu_tilde, l_tilde);
    let kappa = l_tilde / mu_tilde;
    let alpha_scaled = alpha * mu_tilde;

    let contraction = b * gamma.sqrt();
    let (rate, r_star) = if contraction < 1.0 {
        (
            Some(contraction),
            Some(convergence_radius(r_c, gamma, alpha, mu_tilde, l_tilde)?),
        )
    } else {
        (None, None)
    };
    let (gradient_value, contraction_only) =
        match gradient_bound(kind, r_c, l_tilde, mu_tilde, alpha, d) {
            Ok((v, flag)) => (Some(v), flag),
            Err(_) => (None, kind == AlgorithmKind::Sdfd),
        };
    let d_star_normalized = normalized_consensus_diameter(kappa, gamma, alpha_scaled).ok();
    let d_star = match (rho_lambda, gradient_value) {
        (Some((rho, lambda)), Some(g)) if lambda < 1.0 => {
            Some(alpha * rho * g * (d as f64).sqrt() / (1.0 - lambda))
        }
        _ => None,
    };

    Ok(TheoryBounds {
        beta: b,
        gamma,
        x_c,
        r_c,
        r_star,
        rate,
        gradient_bound: gradient_value,
        contraction_only,
        d_star_normalized,
        d_star,
        reduction,
    })
}
