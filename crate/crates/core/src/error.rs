use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{op}: no convergence after {iterations} iterations (last iterate {last})")]
    NoConvergence {
        op: &'static str,
        iterations: usize,
        last: f64,
    },

    #[error("{op}: no sign-changing bracket available")]
    NoBracket { op: &'static str },

    #[error("{op}: non-finite value encountered at x = {x}")]
    NonFinite { op: &'static str, x: f64 },

    #[error("semi-infinite integral failed to stabilize (estimate {estimate}, error {error_estimate})")]
    Divergence { estimate: f64, error_estimate: f64 },

    #[error("invalid path-loss exponent {0}: interference integrals require alpha > 2")]
    InvalidAlpha(f64),

    #[error("path-loss exponent {0} unsupported here: closed form holds only for alpha = 4")]
    UnsupportedAlpha(f64),

    #[error(
        "degenerate backoff denominator {denominator} (p_b = {busy}, p_c = {collision}, W0 = {initial_window}, m = {max_stage})"
    )]
    DegenerateDenominator {
        denominator: f64,
        busy: f64,
        collision: f64,
        initial_window: u32,
        max_stage: u32,
    },

    #[error("sensing threshold {threshold} W must be below {limit} W")]
    ThresholdAbovePower { threshold: f64, limit: f64 },

    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("only {retained} retained transmitters across all replications (need at least {required})")]
    InsufficientRetained { retained: usize, required: usize },

    #[error("expected {expected:.1} nodes in region (need at least {required})")]
    InsufficientNodes { expected: f64, required: usize },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter { name, value, reason }
    }

    /// True for failures of a numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::NoBracket { .. }
                | Error::NonFinite { .. }
                | Error::Divergence { .. }
                | Error::DegenerateDenominator { .. }
                | Error::InsufficientRetained { .. }
        )
    }
}
