//! C ABI over the `csopt` analytic model and optimizer.
//!
//! A model is created once with [`csopt_model_new`] and released with
//! [`csopt_model_free`]. Every other call returns a [`CsoptStatus`] and
//! writes its result through an out-pointer only on success. After a
//! failure, [`csopt_last_error`] returns a message for the calling thread.
//!
//! Powers and thresholds cross the boundary in dBm and ratios in dB, the
//! same units the command-line tool uses.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use csopt::math::SolverConfig;
use csopt::model::{ase, solve_tau, BackoffParams, LinkBudget};
use csopt::optimizer::{no_beb_optimal_range, optimize_threshold, OptimizeOptions, SolutionMethod};
use csopt::units::{db_to_linear, dbm_to_watts};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsoptStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A parameter was out of range or unsupported.
    InvalidArgument = 2,
    /// A numerical routine failed to converge or produced a degenerate value.
    Numerical = 3,
    /// The library panicked; this is a bug.
    Internal = 4,
}

/// Opaque model handle.
pub struct CsoptModel {
    density: f64,
    link: LinkBudget,
    backoff: BackoffParams,
    cfg: SolverConfig,
}

/// Parameters for [`csopt_model_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CsoptModelParams {
    /// Node density in nodes per square meter.
    pub density: f64,
    pub tx_power_dbm: f64,
    pub link_distance_m: f64,
    pub path_loss_exp: f64,
    pub target_sir_db: f64,
    pub control_target_sir_db: f64,
    pub initial_window: u32,
    pub max_stage: u32,
}

/// Contention fixed point at one threshold.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CsoptContention {
    pub tau: f64,
    pub busy_prob: f64,
    pub collision_prob: f64,
}

/// Network state at one threshold.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CsoptSpatial {
    pub threshold_dbm: f64,
    pub tau: f64,
    pub sense_range_m: f64,
    pub active_density: f64,
    pub success_prob: f64,
    /// Area spectral efficiency in bit/s/Hz/m².
    pub ase: f64,
}

/// Outcome of [`csopt_optimize`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CsoptOptimum {
    pub state: CsoptSpatial,
    pub outer_iterations: u32,
    /// 1 if the maximum lies on an end of the search interval.
    pub boundary: u8,
    /// 1 if Newton's method converged, 0 if a bracketing fallback was used.
    pub newton: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &csopt::Error) -> CsoptStatus {
    if e.is_numerical() {
        CsoptStatus::Numerical
    } else {
        CsoptStatus::InvalidArgument
    }
}

/// Runs `f` with panics and library errors mapped to status codes.
fn guard<F>(op: &str, f: F) -> CsoptStatus
where
    F: FnOnce() -> Result<(), (CsoptStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsoptStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(format!("{op}: {msg}"));
            status
        }
        Err(_) => {
            set_error(format!("{op}: internal panic"));
            CsoptStatus::Internal
        }
    }
}

fn lib_err(e: csopt::Error) -> (CsoptStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CsoptStatus, String) {
    (CsoptStatus::NullPointer, format!("{what} is null"))
}

fn threshold(model: &CsoptModel, threshold_dbm: f64) -> Result<f64, (CsoptStatus, String)> {
    let w = dbm_to_watts(threshold_dbm);
    if !(w.is_finite() && w > 0.0 && w < model.link.tx_power_watts) {
        return Err((
            CsoptStatus::InvalidArgument,
            format!("threshold {threshold_dbm} dBm must be finite and below the transmit power"),
        ));
    }
    Ok(w)
}

fn spatial(s: &csopt::model::SpatialState) -> CsoptSpatial {
    CsoptSpatial {
        threshold_dbm: csopt::units::watts_to_dbm(s.sense_threshold_watts),
        tau: s.contention.tau,
        sense_range_m: s.sense_range_m,
        active_density: s.active_density,
        success_prob: s.success_prob,
        ase: s.ase,
    }
}

/// Validates `params` and allocates a model. On success `*out` owns the
/// handle; on failure it is set to null.
///
/// # Safety
/// `params` must point to a valid `CsoptModelParams` and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn csopt_model_new(params: *const CsoptModelParams, out: *mut *mut CsoptModel) -> CsoptStatus {
    guard("csopt_model_new", || {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        if !(p.density > 0.0 && p.density.is_finite()) {
            return Err((
                CsoptStatus::InvalidArgument,
                format!("density {} must be positive", p.density),
            ));
        }
        let link = LinkBudget::new(
            dbm_to_watts(p.tx_power_dbm),
            p.link_distance_m,
            p.path_loss_exp,
            db_to_linear(p.target_sir_db),
            db_to_linear(p.control_target_sir_db),
        )
        .map_err(lib_err)?;
        let backoff = BackoffParams::new(p.initial_window, p.max_stage).map_err(lib_err)?;
        let model = CsoptModel {
            density: p.density,
            link,
            backoff,
            cfg: SolverConfig::default(),
        };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from [`csopt_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn csopt_model_free(model: *mut CsoptModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Solves the backoff fixed point at sensing threshold `threshold_dbm`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn csopt_solve_tau(
    model: *const CsoptModel,
    threshold_dbm: f64,
    out: *mut CsoptContention,
) -> CsoptStatus {
    guard("csopt_solve_tau", || {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let th = threshold(m, threshold_dbm)?;
        let s = solve_tau(m.density, &m.link, &m.backoff, th, &m.cfg).map_err(lib_err)?;
        *out = CsoptContention {
            tau: s.tau,
            busy_prob: s.busy_prob,
            collision_prob: s.collision_prob,
        };
        Ok(())
    })
}

/// Evaluates the area spectral efficiency at `threshold_dbm`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn csopt_ase(
    model: *const CsoptModel,
    threshold_dbm: f64,
    out: *mut CsoptSpatial,
) -> CsoptStatus {
    guard("csopt_ase", || {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let th = threshold(m, threshold_dbm)?;
        let s = ase(m.density, &m.link, &m.backoff, th, &m.cfg).map_err(lib_err)?;
        *out = spatial(&s);
        Ok(())
    })
}

/// Finds the ASE-maximizing threshold over [-90 dBm, P - 0.1 dB].
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn csopt_optimize(model: *const CsoptModel, out: *mut CsoptOptimum) -> CsoptStatus {
    guard("csopt_optimize", || {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r =
            optimize_threshold(m.density, &m.link, &m.backoff, &m.cfg, &OptimizeOptions::default()).map_err(lib_err)?;
        *out = CsoptOptimum {
            state: spatial(&r.converged_state),
            outer_iterations: u32::try_from(r.outer_iterations).unwrap_or(u32::MAX),
            boundary: u8::from(r.boundary),
            newton: u8::from(r.method == SolutionMethod::Newton),
        };
        Ok(())
    })
}

/// Optimal sensing range when backoff is ignored. Requires α = 4.
///
/// # Safety
/// `model` must be a live handle and `out_m` writable.
#[no_mangle]
pub unsafe extern "C" fn csopt_no_beb_range(model: *const CsoptModel, out_m: *mut f64) -> CsoptStatus {
    guard("csopt_no_beb_range", || {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out_m.is_null() {
            return Err(null("out_m"));
        }
        *out_m = no_beb_optimal_range(&m.link).map_err(lib_err)?;
        Ok(())
    })
}

/// Message for the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn csopt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn csopt_status_name(status: CsoptStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        CsoptStatus::Ok => b"ok\0",
        CsoptStatus::NullPointer => b"null pointer\0",
        CsoptStatus::InvalidArgument => b"invalid argument\0",
        CsoptStatus::Numerical => b"numerical failure\0",
        CsoptStatus::Internal => b"internal error\0",
    };
    s.as_ptr().cast()
}
