//! Closed-form analytics of the homogeneous ("no anti-coordination") Nash
//! equilibrium, used standalone and as test oracles for the engine.

use serde::Serialize;

use crate::error::DomainError;
use crate::price::PriceSpec;
use crate::strategies::bias_from_equilibrium;
use crate::weights::WeightVector;

/// Solution of `R(A* + η̄) = I` on a bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum AStar {
    Interior(f64),
    /// `I > R(hi + η̄)`: everyone plays `+1`.
    SaturatedHigh(f64),
    /// `I < R(lo + η̄)`: everyone plays `-1`.
    SaturatedLow(f64),
}

impl AStar {
    /// The root, or the bracket end for saturated solutions.
    pub fn value(self) -> f64 {
        match self {
            AStar::Interior(v) | AStar::SaturatedHigh(v) | AStar::SaturatedLow(v) => v,
        }
    }

    pub fn is_saturated(self) -> bool {
        !matches!(self, AStar::Interior(_))
    }
}

/// Relative residual tolerance of the bisection.
pub const A_STAR_TOL: f64 = 1e-9;

/// Finds `A*` with `R(A* + eta_mean) = intraday`, searching `bracket`
/// (conventionally `[-W, W]`). Linear families are solved in closed form,
/// everything else by bisection. The bracket is clipped to the region where
/// `R` is non-decreasing. If the target sits inside a jump of `R` (cut-off at
/// zero) the jump location is returned.
pub fn solve_a_star(spec: &PriceSpec, intraday: f64, eta_mean: f64, bracket: (f64, f64)) -> AStar {
    let (lo, hi) = bracket;
    assert!(lo < hi, "empty bracket");
    let classify = |x: f64| {
        if x > hi {
            AStar::SaturatedHigh(hi)
        } else if x < lo {
            AStar::SaturatedLow(lo)
        } else {
            AStar::Interior(x)
        }
    };
    match spec {
        PriceSpec::Identity => return classify(intraday - eta_mean),
        PriceSpec::ScaledLinear { c, n } if *c > 0.0 => return classify(intraday * *n as f64 / c - eta_mean),
        PriceSpec::Affine { intraday: i0, slope, a_star } if *slope > 0.0 => {
            return classify(a_star + (intraday - i0) / slope - eta_mean)
        }
        _ => {}
    }
    let (mlo, mhi) = spec.monotone_range();
    let lo_x = lo.max(mlo - eta_mean);
    let hi_x = hi.min(mhi - eta_mean);
    // Out-of-domain evaluations (merit exhaustion) count as saturation.
    let g = |x: f64| spec.eval(x + eta_mean).map(|r| r - intraday);
    match g(hi_x) {
        Ok(v) if v < 0.0 => return AStar::SaturatedHigh(hi),
        Err(_) => return AStar::SaturatedHigh(hi),
        _ => {}
    }
    match g(lo_x) {
        Ok(v) if v > 0.0 => return AStar::SaturatedLow(lo),
        Err(_) => return AStar::SaturatedLow(lo),
        _ => {}
    }
    let tol = A_STAR_TOL * intraday.abs().max(1.0);
    let (mut a, mut b) = (lo_x, hi_x);
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let v = g(m).expect("inside the validated bracket");
        if v.abs() < tol {
            return AStar::Interior(m);
        }
        if v < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    AStar::Interior(0.5 * (a + b))
}

/// Analytic statistics of the homogeneous equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub a_star: f64,
    pub bias_p: f64,
    pub total_weight: f64,
    pub heterogeneity: f64,
    pub effective_agents: f64,
    /// `σ_A = √((W² - A*²)·X/N)`; zero when saturated.
    pub sigma_a_pred: f64,
    /// `μ_A`, equal to `A*` for a linear price.
    pub mean_a_pred: f64,
    /// `σ_A/μ_A`, absent when `μ_A = 0`.
    pub sigma_over_mean: Option<f64>,
    pub saturated: bool,
}

/// Fluctuations when every agent independently plays `+1` with the same
/// probability `p = 1/2 + A*/(2W)`.
pub fn nash_variance(weights: &WeightVector, a_star: f64) -> EquilibriumReport {
    let w = weights.total();
    let x = weights.heterogeneity();
    let n = weights.len() as f64;
    let saturated = a_star.abs() >= w;
    let mean = a_star.clamp(-w, w);
    let sigma = if saturated { 0.0 } else { ((w * w - a_star * a_star) * x / n).sqrt() };
    EquilibriumReport {
        a_star,
        bias_p: bias_from_equilibrium(a_star, w),
        total_weight: w,
        heterogeneity: x,
        effective_agents: n / x,
        sigma_a_pred: sigma,
        mean_a_pred: mean,
        sigma_over_mean: (mean != 0.0).then(|| sigma / mean.abs()),
        saturated,
    }
}

/// Mean arbitrage at which `⟨I - R(A+η)⟩ = 0` for a price expanded to second
/// order around `A*`: `A* - (c2/c1)(σ_A² + σ_η²)`.
pub fn quadratic_mean_shift(c1: f64, c2: f64, var_a: f64, var_eta: f64, a_star: f64) -> f64 {
    assert!(c1 > 0.0, "c1 must be positive");
    a_star - (c2 / c1) * (var_a + var_eta)
}

/// Normalizer `√((W² - A*²)·X/N)` of the scaling collapse.
pub fn scaling_normalizer(weights: &WeightVector, a_star: f64) -> Result<f64, DomainError> {
    let r = nash_variance(weights, a_star);
    if r.saturated || r.sigma_a_pred == 0.0 {
        return Err(DomainError::Saturated);
    }
    Ok(r.sigma_a_pred)
}

/// Collapse variable `σ_A / √((W² - A*²)·X/N)`; one for the non-learning game.
pub fn scaling_prediction(sigma_a: f64, weights: &WeightVector, a_star: f64) -> Result<f64, DomainError> {
    Ok(sigma_a / scaling_normalizer(weights, a_star)?)
}

/// First-order factor by which `σ_A²` grows when an arbitrageur of weight
/// `new_weight` joins at fixed `μ_A`:
/// `1 + w_j·2μ²/(W(W² - μ²)) + w_j²/Σw²`.
pub fn added_arbitrageur_factor(weights: &WeightVector, new_weight: f64, mean_a: f64) -> f64 {
    let w = weights.total();
    assert!(mean_a.abs() < w, "|mean_A| must be below W");
    1.0 + new_weight * 2.0 * mean_a * mean_a / (w * (w * w - mean_a * mean_a))
        + new_weight * new_weight / weights.sum_of_squares()
}

/// Default `W/μ_A` of the order-of-magnitude estimate.
pub const DEFAULT_W_OVER_MU: f64 = 2.236_067_977_499_79; // √5

/// `σ_A/μ_A = √((W/μ_A)² - 1) / √(N/X)` for an assumed `W/μ_A`.
/// Order-of-magnitude only: the ratio `W/μ_A` is an input, not derived.
pub fn sigma_over_mean_estimate(weights: &WeightVector, w_over_mu: f64) -> f64 {
    (w_over_mu * w_over_mu - 1.0).sqrt() / weights.effective_agents().sqrt()
}
