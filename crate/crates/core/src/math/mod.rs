//! Scalar numerical primitives used by the analytic model and optimizer.

mod diff;
mod erf;
mod golden;
mod newton;
mod quad;

pub use diff::{central_diff, DiffOrder};
pub use erf::{erf, erfc};
pub use golden::golden_section_max;
pub use newton::{newton_observed, newton_safeguarded, Root};
pub use quad::{adaptive_simpson, integrate_semi_infinite};

/// Tolerances shared by every iterative routine in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Relative finite-difference step; the absolute step is
    /// `fd_step_rel * max(|x|, 1)`.
    pub fd_step_rel: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_iter: 100,
            fd_step_rel: 1e-5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        for (name, v) in [
            ("abs_tol", self.abs_tol),
            ("rel_tol", self.rel_tol),
            ("fd_step_rel", self.fd_step_rel),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, v, "must be strictly positive"));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", 0.0, "must be at least 1"));
        }
        Ok(())
    }
}
