//! Newton iteration with a bisection safeguard.

use super::{central_diff, DiffOrder, SolverConfig};
use crate::{Error, Result};

/// Derivatives smaller than this in magnitude are treated as vanished.
const MIN_DERIVATIVE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    /// Iterations performed, Newton and bisection combined.
    pub iterations: usize,
    /// How many of those iterations fell back to bisection.
    pub bisections: usize,
}

/// Finds a root of `f` starting from `x0`.
///
/// `df` is the derivative; when absent a central difference with step
/// `cfg.fd_step_rel` is used. With a `bracket` the iterate never leaves it:
/// a Newton step that would, one taken with a vanishing derivative, or one
/// that fails to halve the step from two iterations back is replaced by
/// bisection. Without a bracket a vanishing derivative is fatal.
pub fn newton_safeguarded<F>(
    f: F,
    df: Option<&dyn Fn(f64) -> f64>,
    x0: f64,
    bracket: Option<(f64, f64)>,
    cfg: &SolverConfig,
) -> Result<Root>
where
    F: Fn(f64) -> f64,
{
    newton_observed(f, df, x0, bracket, cfg, |_, _| {})
}

/// Same as [`newton_safeguarded`], calling `observe(x, f(x))` once for every
/// point at which the iteration evaluates the residual.
pub fn newton_observed<F, O>(
    f: F,
    df: Option<&dyn Fn(f64) -> f64>,
    x0: f64,
    bracket: Option<(f64, f64)>,
    cfg: &SolverConfig,
    mut observe: O,
) -> Result<Root>
where
    F: Fn(f64) -> f64,
    O: FnMut(f64, f64),
{
    const OP: &str = "newton_safeguarded";
    cfg.validate()?;
    if !x0.is_finite() {
        return Err(Error::NonFinite { op: OP, x: x0 });
    }

    // (lo, hi, sign of f at lo)
    let mut interval = match bracket {
        Some((a, b)) => {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let flo = f(lo);
            let fhi = f(hi);
            if !flo.is_finite() {
                return Err(Error::NonFinite { op: OP, x: lo });
            }
            if !fhi.is_finite() {
                return Err(Error::NonFinite { op: OP, x: hi });
            }
            if flo == 0.0 {
                observe(lo, flo);
                return Ok(Root {
                    x: lo,
                    iterations: 0,
                    bisections: 0,
                });
            }
            if fhi == 0.0 {
                observe(hi, fhi);
                return Ok(Root {
                    x: hi,
                    iterations: 0,
                    bisections: 0,
                });
            }
            if flo.signum() == fhi.signum() {
                return Err(Error::NoBracket { op: OP });
            }
            Some((lo, hi, flo.signum()))
        }
        None => None,
    };

    let mut x = match interval {
        Some((lo, hi, _)) => x0.clamp(lo, hi),
        None => x0,
    };
    let mut bisections = 0;
    let mut prev_step = interval.map_or(f64::INFINITY, |(lo, hi, _)| hi - lo);
    let mut last_step = prev_step;

    for iter in 1..=cfg.max_iter {
        let fx = f(x);
        observe(x, fx);
        if !fx.is_finite() {
            return Err(Error::NonFinite { op: OP, x });
        }
        if fx.abs() <= cfg.abs_tol {
            return Ok(Root {
                x,
                iterations: iter - 1,
                bisections,
            });
        }
        if let Some((lo, hi, slo)) = interval.as_mut() {
            if fx.signum() == *slo {
                *lo = x;
            } else {
                *hi = x;
            }
        }

        let d = match df {
            Some(df) => df(x),
            None => central_diff(&f, x, DiffOrder::First, cfg.fd_step_rel),
        };
        let usable = d.is_finite() && d.abs() >= MIN_DERIVATIVE;
        let newton = x - fx / d;

        let next = match interval {
            Some((lo, hi, _)) => {
                // Bisect when Newton leaves the bracket or is not at least
                // halving the step from two iterations back.
                if usable && newton > lo && newton < hi && 2.0 * (newton - x).abs() <= prev_step {
                    newton
                } else {
                    bisections += 1;
                    0.5 * (lo + hi)
                }
            }
            None if usable => newton,
            None => return Err(Error::NoBracket { op: OP }),
        };
        if !next.is_finite() {
            return Err(Error::NonFinite { op: OP, x: next });
        }

        let step = (next - x).abs();
        prev_step = last_step;
        last_step = step;
        x = next;
        let width_done = interval
            .map(|(lo, hi, _)| hi - lo <= cfg.rel_tol * x.abs().max(f64::MIN_POSITIVE))
            .unwrap_or(false);
        if step <= cfg.rel_tol * x.abs() || step == 0.0 || width_done {
            return Ok(Root {
                x,
                iterations: iter,
                bisections,
            });
        }
    }
    Err(Error::NoConvergence {
        op: OP,
        iterations: cfg.max_iter,
        last: x,
    })
}
