use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{range, Params};
use super::{CliError, Outcome};
use crate::geometry_sim::{
    estimate_busy_prob, estimate_success_and_ase, replication_rng, SimOutcome, SimRegion, SuccessEstimate, Z95,
};
use crate::mac_sim::{run_mac_sim, tau_table as build_tau_table, MacSimSettings, MacSimStats, TableCell, TableSim};
use crate::math::SolverConfig;
use crate::model::{ase, solve_tau, BackoffParams, ContentionState, LinkBudget, SpatialState};
use crate::optimizer::{
    grid_search_threshold, no_beb_optimal_range, no_beb_optimal_threshold, optimize_threshold, DerivativeMode,
    NoBebMapping, OptimizeOptions, OptimizerReport, GRID_STEP_DB,
};
use crate::units::{db_to_linear, dbm_to_watts, watts_to_dbm};

type CmdResult = Result<Outcome, CliError>;

const DESK_REGION_M: f64 = 2000.0;
const DESK_REPLICATIONS: usize = 200;

fn ok(text: String) -> CmdResult {
    Ok(Outcome { text, deferred: None })
}

fn model_err(op: &'static str) -> impl Fn(crate::Error) -> CliError {
    move |e| CliError::from_model(op, e)
}

/// Independent stream `k` of the command seed.
fn sub_seed(seed: u64, k: u64) -> u64 {
    replication_rng(seed, k).random()
}

/// Link parameters in user units, converted once here.
struct LinkArgs {
    p_dbm: f64,
    beta_c_db: f64,
    beta_db: f64,
    link: LinkBudget,
}

fn link_args(params: &Params, beta_db: f64, beta_c_db: f64) -> Result<LinkArgs, CliError> {
    let alpha = params.f64_or("alpha", 4.0)?;
    if alpha != 4.0 {
        return Err(CliError::Usage(format!(
            "alpha = {alpha} is not supported: the busy-probability and success-probability closed forms hold only for alpha = 4"
        )));
    }
    let p_dbm = params.f64_or("p-dbm", 30.0)?;
    let rt = params.f64_or("rt-m", 50.0)?;
    let link = LinkBudget::new(
        dbm_to_watts(p_dbm),
        rt,
        alpha,
        db_to_linear(beta_db),
        db_to_linear(beta_c_db),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(LinkArgs {
        p_dbm,
        beta_c_db,
        beta_db,
        link,
    })
}

fn backoff(params: &Params, w0: u32, m: u32) -> Result<BackoffParams, CliError> {
    BackoffParams::new(params.u32_or("w0", w0)?, params.u32_or("m", m)?).map_err(|e| CliError::Usage(e.to_string()))
}

fn density(params: &Params, default: f64) -> Result<f64, CliError> {
    let d = params.scalar_list_or("lambda", default)?;
    if !(d > 0.0) {
        return Err(CliError::Usage(format!("lambda: must be positive, got {d}")));
    }
    Ok(d)
}

fn threshold_below_power(is_dbm: f64, p_dbm: f64) -> Result<f64, CliError> {
    if is_dbm >= p_dbm {
        return Err(CliError::Usage(format!(
            "is-dbm = {is_dbm} must be below the transmit power {p_dbm} dBm"
        )));
    }
    Ok(dbm_to_watts(is_dbm))
}

fn region(params: &Params) -> Result<SimRegion, CliError> {
    let side = params.f64_or("region-m", DESK_REGION_M)?;
    SimRegion::new(side, !params.flag("bounded")?).map_err(|e| CliError::Usage(e.to_string()))
}

fn mac_settings(params: &Params) -> Result<MacSimSettings, CliError> {
    let desk = MacSimSettings::desk_scale();
    Ok(MacSimSettings {
        region: region(params)?,
        slots: params.u64_or("slots", desk.slots)?,
        ..desk
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(format!("json: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Writes an optional estimate as two CSV fields, empty when absent.
fn sim_fields(out: &mut String, sim: Option<&SimOutcome>) {
    match sim {
        Some(s) => write!(out, ",{},{}", s.estimate, s.half_width_95).unwrap(),
        None => out.push_str(",,"),
    }
}

pub(crate) fn tau_table(params: &Params, seed: Option<u64>) -> CmdResult {
    let lambdas = params.list_or("lambda", &[1e-4, 1e-3, 1e-2])?;
    let thresholds = params.list_or("is-dbm", &[-40.0, -10.0])?;
    let controls = params.list_or("beta-c-db", &[3.0, 10.0])?;
    let beta_db = params.scalar_list_or("beta-db", 10.0)?;
    let args = link_args(params, beta_db, controls[0])?;
    let backoff = backoff(params, 32, 5)?;

    let mut cells = Vec::new();
    for &density in &lambdas {
        if !(density > 0.0) {
            return Err(CliError::Usage(format!("lambda: must be positive, got {density}")));
        }
        for &threshold_dbm in &thresholds {
            threshold_below_power(threshold_dbm, args.p_dbm)?;
            for &control_target_sir_db in &controls {
                cells.push(TableCell {
                    density,
                    threshold_dbm,
                    control_target_sir_db,
                });
            }
        }
    }

    let sim = match seed {
        Some(seed) => Some(TableSim {
            settings: mac_settings(params)?,
            seeds: params.usize_or("seeds", 10)?,
            seed,
        }),
        None => None,
    };
    let rows =
        build_tau_table(&cells, &args.link, &backoff, sim.as_ref(), &SolverConfig::default()).map_err(|e| match e {
            crate::Error::InvalidParameter { .. } | crate::Error::InsufficientNodes { .. } => {
                CliError::Usage(format!("tau-table: {e}"))
            }
            e => CliError::from_model("tau-table", e),
        })?;

    let mut out = String::from("lambda,is_dbm,beta_c_db,tau_analytic,tau_sim,tau_sim_ci95\n");
    for row in &rows {
        let c = &row.cell;
        write!(
            out,
            "{},{},{},{}",
            c.density, c.threshold_dbm, c.control_target_sir_db, row.tau_analytic
        )
        .unwrap();
        sim_fields(&mut out, row.tau_sim.as_ref());
        out.push('\n');
    }
    ok(out)
}

pub(crate) fn ase_sweep(params: &Params, seed: Option<u64>) -> CmdResult {
    let density = density(params, 0.2)?;
    let beta_db = params.scalar_list_or("beta-db", 10.0)?;
    let beta_c_db = params.scalar_list_or("beta-c-db", 10.0)?;
    let args = link_args(params, beta_db, beta_c_db)?;
    let backoff = backoff(params, 16, 32)?;
    let points = match params.raw("is-dbm") {
        Some(_) => params.list_or("is-dbm", &[])?,
        None => range(
            "step-db",
            params.f64_or("from-dbm", -60.0)?,
            params.f64_or("to-dbm", -10.0)?,
            params.f64_or("step-db", 1.0)?,
        )?,
    };
    let thresholds = points
        .iter()
        .map(|&d| threshold_below_power(d, args.p_dbm))
        .collect::<Result<Vec<f64>, CliError>>()?;

    let sim = match seed {
        Some(seed) => Some((
            region(params)?,
            params.usize_or("replications", DESK_REPLICATIONS)?,
            seed,
        )),
        None => None,
    };
    let cfg = SolverConfig::default();
    let rows = thresholds
        .par_iter()
        .enumerate()
        .map(|(i, &th)| {
            let state = ase(density, &args.link, &backoff, th, &cfg).map_err(model_err("ase-sweep"))?;
            let simulated = match &sim {
                Some((region, reps, seed)) => Some(
                    estimate_success_and_ase(
                        density,
                        &args.link,
                        &backoff,
                        th,
                        region,
                        *reps,
                        sub_seed(*seed, i as u64),
                        &cfg,
                    )
                    .map_err(|e| match e {
                        crate::Error::InvalidParameter { .. } => CliError::Usage(format!("ase-sweep: {e}")),
                        e => CliError::from_model("ase-sweep simulation", e),
                    })?
                    .ase,
                ),
                None => None,
            };
            Ok((state, simulated))
        })
        .collect::<Result<Vec<(SpatialState, Option<SimOutcome>)>, CliError>>()?;

    let mut out = String::from("is_dbm,tau,r_s_m,lambda_t,p_s,eta_analytic");
    if sim.is_some() {
        out.push_str(",eta_sim,eta_sim_ci95");
    }
    out.push('\n');
    for (dbm, (s, simulated)) in points.iter().zip(&rows) {
        write!(
            out,
            "{},{},{},{},{},{}",
            dbm, s.contention.tau, s.sense_range_m, s.active_density, s.success_prob, s.ase
        )
        .unwrap();
        if sim.is_some() {
            sim_fields(&mut out, simulated.as_ref());
        }
        out.push('\n');
    }
    ok(out)
}

#[derive(Debug, Serialize)]
struct GridCertificate {
    grid_step_db: f64,
    threshold_dbm: f64,
    ase: f64,
    /// Distance from the reported optimum, in dB.
    gap_db: f64,
}

#[derive(Debug, Serialize)]
struct NoBebComparison {
    mapping: NoBebMapping,
    sense_range_m: f64,
    threshold_dbm: f64,
    ase: f64,
}

#[derive(Debug, Serialize)]
struct OptimizeEntry {
    beta_db: f64,
    report: OptimizerReport,
    grid_certificate: GridCertificate,
    certified: bool,
    no_beb: NoBebComparison,
}

pub(crate) fn optimize(params: &Params) -> CmdResult {
    let density = density(params, 0.2)?;
    let betas = params.list_or("beta-db", &range("beta-db", 0.0, 20.0, 1.0)?)?;
    if betas.is_empty() {
        return Err(CliError::Usage("beta-db: empty list".into()));
    }
    let beta_c_db = params.scalar_list_or("beta-c-db", 10.0)?;
    let backoff = backoff(params, 16, 32)?;
    let grid_method = match params.raw("method").unwrap_or("newton") {
        "newton" => false,
        "grid" => true,
        other => {
            return Err(CliError::Usage(format!(
                "method: expected newton or grid, got {other:?}"
            )))
        }
    };
    let derivative = match params.raw("derivative").unwrap_or("full") {
        "full" => DerivativeMode::FullPipeline,
        "frozen" => DerivativeMode::FrozenTau,
        other => {
            return Err(CliError::Usage(format!(
                "derivative: expected full or frozen, got {other:?}"
            )))
        }
    };
    let mapping = match params.raw("no-beb-mapping").unwrap_or("contention") {
        "contention" => NoBebMapping::ContentionAware,
        "full-access" => NoBebMapping::FullAccess,
        other => {
            return Err(CliError::Usage(format!(
                "no-beb-mapping: expected contention or full-access, got {other:?}"
            )))
        }
    };
    let links = betas
        .iter()
        .map(|&b| link_args(params, b, beta_c_db).map(|a| a.link))
        .collect::<Result<Vec<_>, CliError>>()?;

    let cfg = SolverConfig::default();
    let opts = OptimizeOptions {
        derivative,
        interval: None,
    };
    let entries = betas
        .par_iter()
        .zip(links.par_iter())
        .map(|(&beta_db, link)| {
            let grid = grid_search_threshold(density, link, &backoff, GRID_STEP_DB, &cfg, None)
                .map_err(model_err("optimize grid certificate"))?;
            let report = if grid_method {
                grid.clone()
            } else {
                optimize_threshold(density, link, &backoff, &cfg, &opts).map_err(model_err("optimize"))?
            };
            let gap_db = (report.optimal_threshold_dbm - grid.optimal_threshold_dbm).abs();
            let certified = gap_db <= GRID_STEP_DB * (1.0 + 1e-9);

            let range_m = no_beb_optimal_range(link).map_err(model_err("optimize no-BEB range"))?;
            let th = no_beb_optimal_threshold(density, link, &backoff, mapping, &cfg)
                .map_err(model_err("optimize no-BEB threshold"))?;
            let at_no_beb = ase(density, link, &backoff, th, &cfg).map_err(model_err("optimize no-BEB ASE"))?;
            Ok(OptimizeEntry {
                beta_db,
                grid_certificate: GridCertificate {
                    grid_step_db: GRID_STEP_DB,
                    threshold_dbm: grid.optimal_threshold_dbm,
                    ase: grid.converged_state.ase,
                    gap_db,
                },
                certified,
                no_beb: NoBebComparison {
                    mapping,
                    sense_range_m: range_m,
                    threshold_dbm: watts_to_dbm(th),
                    ase: at_no_beb.ase,
                },
                report,
            })
        })
        .collect::<Result<Vec<OptimizeEntry>, CliError>>()?;

    let mut failures = String::new();
    for e in entries.iter().filter(|e| !e.certified) {
        writeln!(
            failures,
            "beta = {} dB: optimum {} dBm disagrees with the grid maximum {} dBm by {} dB; trace (dBm, tau, eta):",
            e.beta_db, e.report.optimal_threshold_dbm, e.grid_certificate.threshold_dbm, e.grid_certificate.gap_db
        )
        .unwrap();
        for t in &e.report.trace {
            writeln!(failures, "  {} {} {}", t.threshold_dbm, t.tau, t.ase).unwrap();
        }
    }
    Ok(Outcome {
        text: to_json(&entries)?,
        deferred: (!failures.is_empty())
            .then(|| CliError::Numerical(format!("optimize: optimum not certified\n{}", failures.trim_end()))),
    })
}

#[derive(Debug, Serialize)]
struct OperatingPoint {
    lambda: f64,
    p_dbm: f64,
    is_dbm: f64,
    beta_db: f64,
    beta_c_db: f64,
    rt_m: f64,
    alpha: f64,
    w0: u32,
    m: u32,
}

impl OperatingPoint {
    fn new(density: f64, is_dbm: f64, args: &LinkArgs, backoff: &BackoffParams) -> Self {
        OperatingPoint {
            lambda: density,
            p_dbm: args.p_dbm,
            is_dbm,
            beta_db: args.beta_db,
            beta_c_db: args.beta_c_db,
            rt_m: args.link.link_distance_m,
            alpha: args.link.path_loss_exp,
            w0: backoff.initial_window,
            m: backoff.max_stage,
        }
    }
}

#[derive(Debug, Serialize)]
struct MacSimReport {
    params: OperatingPoint,
    seed: u64,
    settings: MacSimSettings,
    analytic: ContentionState,
    /// Mean τ̂ across runs; the half-width needs at least two runs.
    tau_hat: SimOutcome,
    runs: Vec<MacSimStats>,
}

pub(crate) fn mac_sim(params: &Params, seed: Option<u64>) -> CmdResult {
    let seed = seed.expect("stochastic command has a seed");
    let density = density(params, 1e-3)?;
    let is_dbm = params.scalar_list_or("is-dbm", -40.0)?;
    let beta_db = params.scalar_list_or("beta-db", 10.0)?;
    let beta_c_db = params.scalar_list_or("beta-c-db", 10.0)?;
    let args = link_args(params, beta_db, beta_c_db)?;
    let backoff = backoff(params, 32, 5)?;
    let threshold = threshold_below_power(is_dbm, args.p_dbm)?;
    let settings = mac_settings(params)?;
    let seeds = params.usize_or("seeds", 1)?;
    if seeds == 0 {
        return Err(CliError::Usage("seeds: must be at least 1".into()));
    }

    let cfg = SolverConfig::default();
    let analytic =
        solve_tau(density, &args.link, &backoff, threshold, &cfg).map_err(model_err("mac-sim analytic tau"))?;
    let runs = (0..seeds as u64)
        .into_par_iter()
        .map(|r| {
            run_mac_sim(density, &args.link, &backoff, threshold, &settings, sub_seed(seed, r)).map_err(|e| match e {
                crate::Error::InvalidParameter { .. } | crate::Error::InsufficientNodes { .. } => {
                    CliError::Usage(format!("mac-sim: {e}"))
                }
                e => CliError::from_model("mac-sim", e),
            })
        })
        .collect::<Result<Vec<MacSimStats>, CliError>>()?;

    let taus: Vec<f64> = runs.iter().map(|s| s.tau_hat).collect();
    let k = taus.len() as f64;
    let mean = taus.iter().sum::<f64>() / k;
    let half_width_95 = if taus.len() > 1 {
        let var = taus.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
        Z95 * (var / k).sqrt()
    } else {
        f64::NAN
    };
    to_json(&MacSimReport {
        params: OperatingPoint::new(density, is_dbm, &args, &backoff),
        seed,
        settings,
        analytic,
        tau_hat: SimOutcome {
            estimate: mean,
            half_width_95,
            replications: taus.len(),
            seed,
        },
        runs,
    })
    .and_then(ok)
}

#[derive(Debug, Serialize)]
struct BusyComparison {
    analytic: f64,
    simulated: SimOutcome,
}

#[derive(Debug, Serialize)]
struct GeoSimReport {
    params: OperatingPoint,
    seed: u64,
    region: SimRegion,
    analytic: SpatialState,
    busy_prob: BusyComparison,
    simulated: SuccessEstimate,
}

pub(crate) fn geo_sim(params: &Params, seed: Option<u64>) -> CmdResult {
    let seed = seed.expect("stochastic command has a seed");
    let density = density(params, 0.2)?;
    let is_dbm = params.scalar_list_or("is-dbm", -45.0)?;
    let beta_db = params.scalar_list_or("beta-db", 10.0)?;
    let beta_c_db = params.scalar_list_or("beta-c-db", 10.0)?;
    let args = link_args(params, beta_db, beta_c_db)?;
    let backoff = backoff(params, 16, 32)?;
    let threshold = threshold_below_power(is_dbm, args.p_dbm)?;
    let region = region(params)?;
    let reps = params.usize_or("replications", DESK_REPLICATIONS)?;

    let cfg = SolverConfig::default();
    let sim_err = |e: crate::Error| match e {
        crate::Error::InvalidParameter { .. } => CliError::Usage(format!("geo-sim: {e}")),
        e => CliError::from_model("geo-sim", e),
    };
    let analytic = ase(density, &args.link, &backoff, threshold, &cfg).map_err(model_err("geo-sim analytic"))?;
    let busy = estimate_busy_prob(
        density,
        analytic.contention.tau,
        &args.link,
        threshold,
        &region,
        reps,
        sub_seed(seed, 0),
    )
    .map_err(sim_err)?;
    let simulated = estimate_success_and_ase(
        density,
        &args.link,
        &backoff,
        threshold,
        &region,
        reps,
        sub_seed(seed, 1),
        &cfg,
    )
    .map_err(sim_err)?;
    to_json(&GeoSimReport {
        params: OperatingPoint::new(density, is_dbm, &args, &backoff),
        seed,
        region,
        busy_prob: BusyComparison {
            analytic: analytic.contention.busy_prob,
            simulated: busy,
        },
        analytic,
        simulated,
    })
    .and_then(ok)
}
