//! Analytic model: contention fixed point, sensing range, Matérn density,
//! success probability and area spectral efficiency.

mod contention;
mod params;
mod spatial;

pub use contention::{busy_prob, collision_prob, composite_rhs, solve_tau, tau_rhs};
pub use params::{BackoffParams, ContentionState, LinkBudget, SpatialState};
pub use spatial::{
    active_density, ase, ase_with_tau, sensing_range, success_prob, success_prob_closed, success_prob_general,
};

/// Tolerance for "is the path-loss exponent four" checks.
pub(crate) fn is_alpha_four(alpha: f64) -> bool {
    (alpha - 4.0).abs() < 1e-12
}
