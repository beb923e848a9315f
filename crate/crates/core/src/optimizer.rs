//! Sensing-threshold optimization.
//!
//! [`optimize_threshold`] runs the nested iteration: for each outer iterate
//! I_s the contention fixed point τ is re-solved by Newton's method, η is
//! evaluated with that τ, and I_s moves by a Newton step `-η'/η''`. Steps are
//! taken in `log10(I_s)` and safeguarded by bisection on the sign of η'.
//! [`grid_search_threshold`] is the exhaustive oracle used to certify it.

use std::cell::RefCell;

use serde::Serialize;

use crate::math::{central_diff, golden_section_max, newton_observed, DiffOrder, SolverConfig};
use crate::model::{
    ase, ase_with_tau, is_alpha_four, sensing_range, solve_tau, BackoffParams, LinkBudget, SpatialState,
};
use crate::units::{dbm_to_watts, watts_to_dbm};
use crate::{Error, Result};

/// Lowest threshold considered by default.
pub const SEARCH_FLOOR_DBM: f64 = -90.0;
/// Default grid resolution.
pub const GRID_STEP_DB: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionMethod {
    Newton,
    GoldenSection,
    Boundary,
    Grid,
}

/// How η' and η'' treat the contention state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    /// τ is re-solved at every finite-difference point, so the outer
    /// iteration finds a stationary point of η(I_s) with τ = τ(I_s).
    #[default]
    FullPipeline,
    /// τ is held at its value for the current iterate while differencing.
    FrozenTau,
}

/// Admissible sensing thresholds, in watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchInterval {
    pub lo_watts: f64,
    pub hi_watts: f64,
}

impl SearchInterval {
    /// `[-90 dBm, P - 0.1 dB]`. The sensing range stays above 1 m.
    pub fn for_link(link: &LinkBudget) -> Self {
        SearchInterval {
            lo_watts: dbm_to_watts(SEARCH_FLOOR_DBM),
            hi_watts: dbm_to_watts(watts_to_dbm(link.tx_power_watts) - GRID_STEP_DB),
        }
    }

    fn validate(&self, link: &LinkBudget) -> Result<()> {
        if !(self.lo_watts > 0.0 && self.lo_watts < self.hi_watts) {
            return Err(Error::invalid("search interval", self.lo_watts, "needs 0 < lo < hi"));
        }
        if self.hi_watts >= link.tx_power_watts {
            return Err(Error::ThresholdAbovePower {
                threshold: self.hi_watts,
                limit: link.tx_power_watts,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OptimizeOptions {
    pub derivative: DerivativeMode,
    /// Defaults to [`SearchInterval::for_link`].
    pub interval: Option<SearchInterval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub threshold_watts: f64,
    pub threshold_dbm: f64,
    pub tau: f64,
    pub ase: f64,
}

impl TraceEntry {
    fn from_state(s: &SpatialState) -> Self {
        TraceEntry {
            threshold_watts: s.sense_threshold_watts,
            threshold_dbm: watts_to_dbm(s.sense_threshold_watts),
            tau: s.contention.tau,
            ase: s.ase,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerReport {
    pub optimal_threshold_watts: f64,
    pub optimal_threshold_dbm: f64,
    pub converged_state: SpatialState,
    pub outer_iterations: usize,
    pub trace: Vec<TraceEntry>,
    pub method: SolutionMethod,
    /// The maximum sits on an end of the search interval.
    pub boundary: bool,
}

fn report(
    state: SpatialState,
    iterations: usize,
    trace: Vec<TraceEntry>,
    method: SolutionMethod,
    boundary: bool,
) -> OptimizerReport {
    OptimizerReport {
        optimal_threshold_watts: state.sense_threshold_watts,
        optimal_threshold_dbm: watts_to_dbm(state.sense_threshold_watts),
        converged_state: state,
        outer_iterations: iterations,
        trace,
        method,
        boundary,
    }
}

/// Finds the ASE-maximizing sensing threshold by nested Newton iteration.
pub fn optimize_threshold(
    density: f64,
    link: &LinkBudget,
    backoff: &BackoffParams,
    cfg: &SolverConfig,
    opts: &OptimizeOptions,
) -> Result<OptimizerReport> {
    link.validate()?;
    cfg.validate()?;
    let interval = opts.interval.unwrap_or_else(|| SearchInterval::for_link(link));
    interval.validate(link)?;
    let (x_lo, x_hi) = (interval.lo_watts.log10(), interval.hi_watts.log10());
    // Start three decades below the received signal level.
    let x0 = (1e-3 * link.received_power()).log10().clamp(x_lo, x_hi);

    let state_at = |x: f64| ase(density, link, backoff, 10f64.powf(x), cfg);
    let start = state_at(x0)?;
    let scale = if start.ase > 0.0 { start.ase } else { 1.0 };

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let last: RefCell<Option<SpatialState>> = RefCell::new(None);
    let record = |r: Result<f64>| match r {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let eta = |x: f64| record(state_at(x).map(|s| s.ase / scale));

    // Evaluates the state at x, and returns an objective for differencing.
    let local_objective = |x: f64| -> Result<Box<dyn Fn(f64) -> f64 + '_>> {
        let s = state_at(x)?;
        *last.borrow_mut() = Some(s);
        Ok(match opts.derivative {
            DerivativeMode::FullPipeline => Box::new(eta),
            DerivativeMode::FrozenTau => {
                let c = s.contention;
                Box::new(move |y: f64| record(ase_with_tau(density, link, c, 10f64.powf(y)).map(|s| s.ase / scale)))
            }
        })
    };
    let first = |x: f64| {
        let d = local_objective(x).map(|g| central_diff(g, x, DiffOrder::First, cfg.fd_step_rel));
        record(d)
    };
    let second = |x: f64| {
        let d = local_objective(x).map(|g| central_diff(g, x, DiffOrder::Second, cfg.fd_step_rel));
        record(d)
    };

    let mut trace = Vec::new();
    let slope_lo = first(x_lo);
    let slope_hi = first(x_hi);
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }

    if slope_lo > 0.0 && slope_hi < 0.0 {
        let outcome = newton_observed(first, Some(&second), x0, Some((x_lo, x_hi)), cfg, |_, _| {
            if let Some(s) = last.borrow().as_ref() {
                trace.push(TraceEntry::from_state(s));
            }
        });
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        match outcome {
            Ok(root) => {
                let state = state_at(root.x)?;
                return Ok(report(state, root.iterations, trace, SolutionMethod::Newton, false));
            }
            Err(Error::NoConvergence { .. }) => {}
            Err(e) => return Err(e),
        }
    }

    // Either η is monotone on the interval or Newton ran out of iterations.
    let tol = cfg.rel_tol.max(1e-12);
    let x_best = golden_section_max(eta, x_lo, x_hi, tol, 4 * cfg.max_iter.max(50))?;
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    let width = x_hi - x_lo;
    let on_edge = (x_best - x_lo).abs() <= 1e-6 * width || (x_hi - x_best).abs() <= 1e-6 * width;
    let state = state_at(x_best)?;
    trace.push(TraceEntry::from_state(&state));
    let method = if on_edge {
        SolutionMethod::Boundary
    } else {
        SolutionMethod::GoldenSection
    };
    let iterations = trace.len().min(cfg.max_iter);
    Ok(report(state, iterations, trace, method, on_edge))
}

/// Evaluates η on a uniform dBm grid over the search interval and returns
/// the best point. The trace holds every grid point.
pub fn grid_search_threshold(
    density: f64,
    link: &LinkBudget,
    backoff: &BackoffParams,
    grid_db: f64,
    cfg: &SolverConfig,
    interval: Option<SearchInterval>,
) -> Result<OptimizerReport> {
    if !(grid_db > 0.0 && grid_db.is_finite()) {
        return Err(Error::invalid("grid_db", grid_db, "must be positive"));
    }
    link.validate()?;
    let interval = interval.unwrap_or_else(|| SearchInterval::for_link(link));
    interval.validate(link)?;
    let lo_dbm = watts_to_dbm(interval.lo_watts);
    let hi_dbm = watts_to_dbm(interval.hi_watts);
    let n = ((hi_dbm - lo_dbm) / grid_db + 1e-9).floor() as usize + 1;

    let mut trace = Vec::with_capacity(n);
    let mut best: Option<(usize, SpatialState)> = None;
    for i in 0..n {
        let dbm = lo_dbm + i as f64 * grid_db;
        let s = ase(density, link, backoff, dbm_to_watts(dbm).min(interval.hi_watts), cfg)?;
        trace.push(TraceEntry::from_state(&s));
        if best.as_ref().is_none_or(|(_, b)| s.ase > b.ase) {
            best = Some((i, s));
        }
    }
    let (idx, state) = best.expect("grid has at least one point");
    let boundary = idx == 0 || idx == n - 1;
    Ok(report(state, n, trace, SolutionMethod::Grid, boundary))
}

/// Checks that η at the reported optimum is no smaller than at the points
/// `step_db` either side (only the interior side for boundary solutions).
pub fn is_local_max(
    report: &OptimizerReport,
    density: f64,
    link: &LinkBudget,
    backoff: &BackoffParams,
    step_db: f64,
    cfg: &SolverConfig,
) -> Result<bool> {
    let interval = SearchInterval::for_link(link);
    let center = report.converged_state.ase;
    for sign in [-1.0, 1.0] {
        let th = dbm_to_watts(report.optimal_threshold_dbm + sign * step_db);
        if th < interval.lo_watts * (1.0 - 1e-12) || th > interval.hi_watts * (1.0 + 1e-12) {
            continue;
        }
        if ase(density, link, backoff, th, cfg)?.ase > center {
            return Ok(false);
        }
    }
    Ok(true)
}

/// High-density optimum of the sensing range when backoff is ignored:
/// `((1 + √5)/2 · β)^{1/4} r_t`.
pub fn no_beb_optimal_range(link: &LinkBudget) -> Result<f64> {
    if !is_alpha_four(link.path_loss_exp) {
        return Err(Error::UnsupportedAlpha(link.path_loss_exp));
    }
    let golden = 0.5 * (1.0 + 5f64.sqrt());
    Ok((golden * link.target_sir).powf(0.25) * link.link_distance_m)
}

/// Which contender intensity maps the no-backoff range back to a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoBebMapping {
    /// Contenders at the backoff fixed point, λτ(I_s).
    #[default]
    ContentionAware,
    /// Every node contends, λτ = λ.
    FullAccess,
}

/// Threshold whose mean sensing range equals [`no_beb_optimal_range`].
pub fn no_beb_optimal_threshold(
    density: f64,
    link: &LinkBudget,
    backoff: &BackoffParams,
    mapping: NoBebMapping,
    cfg: &SolverConfig,
) -> Result<f64> {
    let target = no_beb_optimal_range(link)?;
    let p = link.tx_power_watts;
    let alpha = link.path_loss_exp;

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let range_at = |x: f64| -> Result<f64> {
        let th = 10f64.powf(x);
        let tau = match mapping {
            NoBebMapping::FullAccess => 1.0,
            NoBebMapping::ContentionAware => solve_tau(density, link, backoff, th, cfg)?.tau,
        };
        sensing_range(density, tau, p, th, alpha)
    };
    let g = |x: f64| match range_at(x) {
        Ok(r) => (r / target).ln(),
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    // R_s >= D0 > target below x_lo; R_s <= D5 = 6^{1/α} m just under P.
    let x_lo = (p / target.powf(alpha)).log10() - 1.0;
    let x_hi = (p * (1.0 - 1e-9)).log10();
    let root = newton_observed(g, None, 0.5 * (x_lo + x_hi), Some((x_lo, x_hi)), cfg, |_, _| {});
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    Ok(10f64.powf(root?.x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::db_to_linear;

    fn sweep_link(beta_db: f64) -> LinkBudget {
        LinkBudget::new(1.0, 50.0, 4.0, db_to_linear(beta_db), db_to_linear(10.0)).unwrap()
    }

    fn sweep_backoff() -> BackoffParams {
        BackoffParams::new(16, 32).unwrap()
    }

    #[test]
    fn newton_agrees_with_grid_at_sweep_defaults() {
        let cfg = SolverConfig::default();
        let link = sweep_link(10.0);
        let r = optimize_threshold(0.2, &link, &sweep_backoff(), &cfg, &OptimizeOptions::default()).unwrap();
        let g = grid_search_threshold(0.2, &link, &sweep_backoff(), GRID_STEP_DB, &cfg, None).unwrap();
        assert_eq!(r.method, SolutionMethod::Newton);
        assert!(!r.boundary);
        assert!((r.optimal_threshold_dbm - g.optimal_threshold_dbm).abs() <= GRID_STEP_DB);
        assert!(is_local_max(&r, 0.2, &link, &sweep_backoff(), GRID_STEP_DB, &cfg).unwrap());
        assert!(r.trace.iter().all(|t| t.tau > 0.0 && t.tau < 1.0));
        assert!(!r.trace.is_empty());
    }

    #[test]
    fn frozen_tau_variant_lands_nearby() {
        let cfg = SolverConfig::default();
        let link = sweep_link(10.0);
        let full = optimize_threshold(0.2, &link, &sweep_backoff(), &cfg, &OptimizeOptions::default()).unwrap();
        let opts = OptimizeOptions {
            derivative: DerivativeMode::FrozenTau,
            interval: None,
        };
        let frozen = optimize_threshold(0.2, &link, &sweep_backoff(), &cfg, &opts).unwrap();
        assert!((full.optimal_threshold_dbm - frozen.optimal_threshold_dbm).abs() < 1.0);
    }

    #[test]
    fn vanishing_density_gives_boundary_solution() {
        let cfg = SolverConfig::default();
        let link = sweep_link(10.0);
        let r = optimize_threshold(1e-9, &link, &sweep_backoff(), &cfg, &OptimizeOptions::default()).unwrap();
        assert!(r.boundary);
        assert_eq!(r.method, SolutionMethod::Boundary);
        let g = grid_search_threshold(1e-9, &link, &sweep_backoff(), GRID_STEP_DB, &cfg, None).unwrap();
        assert!(g.boundary);
        assert!((r.optimal_threshold_dbm - g.optimal_threshold_dbm).abs() <= GRID_STEP_DB);
    }

    #[test]
    fn deterministic_reports() {
        let cfg = SolverConfig::default();
        let link = sweep_link(6.0);
        let a = optimize_threshold(0.2, &link, &sweep_backoff(), &cfg, &OptimizeOptions::default()).unwrap();
        let b = optimize_threshold(0.2, &link, &sweep_backoff(), &cfg, &OptimizeOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_rejects_nonpositive_step() {
        let link = sweep_link(10.0);
        let cfg = SolverConfig::default();
        assert!(grid_search_threshold(0.2, &link, &sweep_backoff(), 0.0, &cfg, None).is_err());
    }

    #[test]
    fn no_beb_range_values() {
        let link = LinkBudget::new(1.0, 50.0, 4.0, 1.0, 1.0).unwrap();
        assert!((no_beb_optimal_range(&link).unwrap() - 56.39).abs() < 0.005);
        let link = LinkBudget::new(1.0, 1.0, 4.0, 16.0, 1.0).unwrap();
        let golden_root: f64 = (0.5 * (1.0 + 5f64.sqrt())).powf(0.25);
        assert!((no_beb_optimal_range(&link).unwrap() - 2.0 * golden_root).abs() < 1e-14);
        assert!((golden_root - 1.1278).abs() < 5e-5);
        let mut l3 = link;
        l3.path_loss_exp = 3.0;
        assert_eq!(no_beb_optimal_range(&l3), Err(Error::UnsupportedAlpha(3.0)));
    }

    #[test]
    fn no_beb_threshold_limits_under_full_access() {
        let cfg = SolverConfig::default();
        let link = sweep_link(10.0);
        let r = no_beb_optimal_range(&link).unwrap();
        let b = sweep_backoff();
        let dense = no_beb_optimal_threshold(1e3, &link, &b, NoBebMapping::FullAccess, &cfg).unwrap();
        assert!(((dense - 6.0 / r.powi(4)) / dense).abs() < 1e-6);
        let sparse = no_beb_optimal_threshold(0.0, &link, &b, NoBebMapping::FullAccess, &cfg).unwrap();
        assert!(((sparse - 1.0 / r.powi(4)) / sparse).abs() < 1e-6);
    }

    #[test]
    fn no_beb_threshold_below_beb_optimum() {
        let cfg = SolverConfig::default();
        let link = sweep_link(10.0);
        let b = sweep_backoff();
        let opt = optimize_threshold(0.2, &link, &b, &cfg, &OptimizeOptions::default()).unwrap();
        let nb = no_beb_optimal_threshold(0.2, &link, &b, NoBebMapping::ContentionAware, &cfg).unwrap();
        assert!(nb < opt.optimal_threshold_watts);
        let eta_nb = ase(0.2, &link, &b, nb, &cfg).unwrap().ase;
        assert!(opt.converged_state.ase >= eta_nb);
    }

    #[test]
    fn unreachable_range_has_no_bracket() {
        // R* ~ 1.1 m needs I_s above P.
        let link = LinkBudget::new(1.0, 1.0, 4.0, 1.0, 1.0).unwrap();
        let err = no_beb_optimal_threshold(
            1e3,
            &link,
            &sweep_backoff(),
            NoBebMapping::FullAccess,
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoBracket { .. }));
    }
}
