//! Contention-phase quantities: control-message collision probability,
//! channel busy probability and the backoff fixed point for τ.

use std::cell::RefCell;
use std::f64::consts::PI;

use super::{is_alpha_four, BackoffParams, ContentionState, LinkBudget};
use crate::math::{central_diff, erf, newton_safeguarded, DiffOrder, SolverConfig};
use crate::{Error, Result};

fn check_density(density: f64) -> Result<()> {
    if density >= 0.0 && density.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("density", density, "must be finite and non-negative"))
    }
}

/// Probability that an RTS/CTS exchange fails because the SIR of the
/// control message at its receiver falls below β_c, with contenders forming
/// a PPP of intensity λτ:
/// `1 - exp(-λτ r_t² β_c^{2/α} 2π² / (α sin(2π/α)))`.
pub fn collision_prob(density: f64, tau: f64, link: &LinkBudget) -> Result<f64> {
    check_density(density)?;
    let alpha = link.path_loss_exp;
    let sin = (2.0 * PI / alpha).sin();
    if !(alpha > 2.0) || sin <= 0.0 {
        return Err(Error::InvalidAlpha(alpha));
    }
    let r2 = link.link_distance_m * link.link_distance_m;
    let exponent = density * tau * r2 * link.control_target_sir.powf(2.0 / alpha) * 2.0 * PI * PI / (alpha * sin);
    Ok(-(-exponent).exp_m1())
}

/// `Pr[I >= I_s]` for Rayleigh-faded interference from a PPP of intensity
/// λτ with α = 4: `erf(π² λτ / 4 · sqrt(P / I_s))`.
pub fn busy_prob(density: f64, tau: f64, link: &LinkBudget, threshold: f64) -> Result<f64> {
    check_density(density)?;
    if !is_alpha_four(link.path_loss_exp) {
        return Err(Error::UnsupportedAlpha(link.path_loss_exp));
    }
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::invalid("threshold", threshold, "must be positive"));
    }
    let arg = PI * PI * density * tau / 4.0 * (link.tx_power_watts / threshold).sqrt();
    Ok(erf(arg))
}

/// Right-hand side h of the backoff fixed point `τ = h(p_b, p_c)`:
///
/// ```text
///              2 (1 - p_b)(1 - 2p_c)
/// h = -----------------------------------------------------------------
///     (1 - 2p_c)(1 - 2p_b + W0 (2p_c)^m) + W0 (1 - p_c)(1 - (2p_c)^m)
/// ```
///
/// The common factor `1 - 2p_c` is cancelled against the geometric sum
/// `1 - x^m = (1 - x)(1 + x + ... + x^{m-1})`, so p_c = 1/2 is regular.
pub fn tau_rhs(busy: f64, collision: f64, backoff: &BackoffParams) -> Result<f64> {
    let w0 = f64::from(backoff.initial_window);
    let x = 2.0 * collision;
    let mut geometric = 0.0;
    let mut x_pow_m = 1.0;
    for _ in 0..backoff.max_stage {
        geometric += x_pow_m;
        x_pow_m *= x;
    }
    let numerator = 2.0 * (1.0 - busy);
    let denominator = 1.0 - 2.0 * busy + w0 * x_pow_m + w0 * (1.0 - collision) * geometric;
    if !(denominator > 0.0 && denominator.is_finite()) {
        return Err(Error::DegenerateDenominator {
            denominator: (1.0 - x) * denominator,
            busy,
            collision,
            initial_window: backoff.initial_window,
            max_stage: backoff.max_stage,
        });
    }
    Ok(numerator / denominator)
}

/// `h(τ)` with p_b and p_c recomputed from τ. Returns `(h, p_b, p_c)`.
pub fn composite_rhs(
    density: f64,
    tau: f64,
    link: &LinkBudget,
    backoff: &BackoffParams,
    threshold: f64,
) -> Result<(f64, f64, f64)> {
    let pb = busy_prob(density, tau, link, threshold)?;
    let pc = collision_prob(density, tau, link)?;
    Ok((tau_rhs(pb, pc, backoff)?, pb, pc))
}

/// Solves `τ = h(τ)` by Newton's method on `τ - h(τ)` from τ₀ = 0, with
/// `h'` by central differences and bisection on [0, 1] as the safeguard.
pub fn solve_tau(
    density: f64,
    link: &LinkBudget,
    backoff: &BackoffParams,
    threshold: f64,
    cfg: &SolverConfig,
) -> Result<ContentionState> {
    link.validate()?;
    composite_rhs(density, 0.0, link, backoff, threshold)?;

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let h = |t: f64| match composite_rhs(density, t, link, backoff, threshold) {
        Ok((v, _, _)) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let residual = |t: f64| t - h(t);
    // Difference step proportional to τ, which spans many decades.
    let slope = |t: f64| {
        let s = t.abs().max(1e-9);
        central_diff(|u| residual(u * s), t / s, DiffOrder::First, cfg.fd_step_rel) / s
    };

    let root = newton_safeguarded(residual, Some(&slope), 0.0, Some((0.0, 1.0)), cfg)
        .map_err(|e| failure.borrow_mut().take().unwrap_or(e))?;

    // One polishing step: the stopping test on |τ - h(τ)| is absolute, and
    // the optimizer differentiates η(I_s) through τ.
    let mut tau = root.x;
    let r = residual(tau);
    if r != 0.0 {
        let candidate = tau - r / slope(tau);
        if (0.0..=1.0).contains(&candidate) && residual(candidate).abs() <= r.abs() {
            tau = candidate;
        }
    }
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }

    let (h_val, pb, pc) = composite_rhs(density, tau, link, backoff, threshold)?;
    Ok(ContentionState {
        tau,
        busy_prob: pb,
        collision_prob: pc,
        residual: (tau - h_val).abs(),
        iterations: root.iterations,
    })
}
