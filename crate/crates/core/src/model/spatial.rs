//! Spatial quantities for a fixed contention state: mean sensing range,
//! Matérn type-II active density, success probability and ASE.

use std::f64::consts::PI;

use super::{is_alpha_four, solve_tau, BackoffParams, ContentionState, LinkBudget, SpatialState};
use crate::math::{integrate_semi_infinite, SolverConfig};
use crate::{Error, Result};

/// Mean sensing range for contender intensity λτ.
///
/// With `D_i = ((i+1) P / I_s)^{1/α}` and the nearest-contender distance
/// density `f(r) = 2πλτ r exp(-πλτ r²)`, the range is
/// `D5 F(0, D0) + Σ_{i=1..5} D_{5-i} F(D_{i-1}, D_i) + D0 F(D5, ∞)`
/// where `F(a, b) = ∫_a^b f` is evaluated exactly.
pub fn sensing_range(density: f64, tau: f64, tx_power: f64, threshold: f64, path_loss_exp: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::invalid("threshold", threshold, "must be positive"));
    }
    if threshold >= tx_power {
        return Err(Error::ThresholdAbovePower {
            threshold,
            limit: tx_power,
        });
    }
    if !(path_loss_exp > 2.0) {
        return Err(Error::InvalidAlpha(path_loss_exp));
    }
    let intensity = density * tau;
    if !(intensity >= 0.0 && intensity.is_finite()) {
        return Err(Error::invalid(
            "density * tau",
            intensity,
            "must be finite and non-negative",
        ));
    }

    let ratio = tx_power / threshold;
    let d: [f64; 6] = std::array::from_fn(|i| ((i + 1) as f64 * ratio).powf(1.0 / path_loss_exp));
    let c = PI * intensity;
    // ∫_a^b f(r) dr = exp(-c a²) (1 - exp(-c (b² - a²)))
    let mass = |a: f64, b: f64| (-c * a * a).exp() * -(-c * (b * b - a * a)).exp_m1();

    let mut range = d[5] * mass(0.0, d[0]);
    for i in 1..=5 {
        range += d[5 - i] * mass(d[i - 1], d[i]);
    }
    range += d[0] * (-c * d[5] * d[5]).exp();
    Ok(range)
}

/// Intensity of the Matérn type-II process obtained from contenders of
/// intensity λτ with exclusion radius R_s: `(1 - exp(-λτπR_s²)) / (πR_s²)`.
pub fn active_density(density: f64, tau: f64, sense_range: f64) -> Result<f64> {
    if !(sense_range > 0.0 && sense_range.is_finite()) {
        return Err(Error::invalid("sense_range", sense_range, "must be positive"));
    }
    let area = PI * sense_range * sense_range;
    let x = density * tau * area;
    Ok(-(-x).exp_m1() / area)
}

/// Closed-form success probability for α = 4:
/// `exp(-π λ_t sqrt(β) r_t² atan(sqrt(β) r_t² / R_s²))`.
pub fn success_prob_closed(active_density: f64, link: &LinkBudget, sense_range: f64) -> Result<f64> {
    if !is_alpha_four(link.path_loss_exp) {
        return Err(Error::UnsupportedAlpha(link.path_loss_exp));
    }
    let sb = link.target_sir.sqrt();
    let r2 = link.link_distance_m * link.link_distance_m;
    let arg = sb * r2 / (sense_range * sense_range);
    Ok((-PI * active_density * sb * r2 * arg.atan()).exp())
}

/// Success probability for any α > 2, from the Laplace functional of a PPP
/// of intensity λ_t outside radius R_s:
/// `exp(-2πλ_t ∫_{R_s}^∞ β / (β + (v/r_t)^α) v dv)`.
pub fn success_prob_general(active_density: f64, link: &LinkBudget, sense_range: f64) -> Result<f64> {
    let alpha = link.path_loss_exp;
    if !(alpha > 2.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if !(sense_range >= 0.0) {
        return Err(Error::invalid("sense_range", sense_range, "must be non-negative"));
    }
    if active_density == 0.0 {
        return Ok(1.0);
    }
    let beta = link.target_sir;
    let rt = link.link_distance_m;
    let integral = integrate_semi_infinite(|v| beta * v / (beta + (v / rt).powf(alpha)), sense_range)?;
    Ok((-2.0 * PI * active_density * integral).exp())
}

/// Closed form when α = 4, quadrature otherwise.
pub fn success_prob(active_density: f64, link: &LinkBudget, sense_range: f64) -> Result<f64> {
    if is_alpha_four(link.path_loss_exp) {
        success_prob_closed(active_density, link, sense_range)
    } else {
        success_prob_general(active_density, link, sense_range)
    }
}

/// Evaluates the spatial chain for an already-solved contention state.
pub fn ase_with_tau(
    density: f64,
    link: &LinkBudget,
    contention: ContentionState,
    threshold: f64,
) -> Result<SpatialState> {
    let tau = contention.tau;
    let range = sensing_range(density, tau, link.tx_power_watts, threshold, link.path_loss_exp)?;
    let lambda_t = active_density(density, tau, range)?;
    let ps = success_prob(lambda_t, link, range)?;
    Ok(SpatialState {
        sense_threshold_watts: threshold,
        sense_range_m: range,
        active_density: lambda_t,
        success_prob: ps,
        ase: lambda_t * (1.0 + link.target_sir).log2() * ps,
        contention,
    })
}

/// Area spectral efficiency `λ_t log2(1 + β) p_s` at sensing threshold
/// `threshold`, solving the contention fixed point first.
pub fn ase(
    density: f64,
    link: &LinkBudget,
    backoff: &BackoffParams,
    threshold: f64,
    cfg: &SolverConfig,
) -> Result<SpatialState> {
    let contention = solve_tau(density, link, backoff, threshold, cfg)?;
    ase_with_tau(density, link, contention, threshold)
}
