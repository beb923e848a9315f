//! Slotted simulator of binary exponential backoff with carrier sensing.
//!
//! Each slot, every node compares the Rayleigh-faded interference from the
//! previous slot's transmitters with the sensing threshold and freezes its
//! backoff counter when the channel is busy. Nodes whose counter expires in
//! an idle slot send an RTS, which succeeds when its SIR at the paired
//! receiver reaches the control target.
//!
//! Counters are stored as the virtual slot at which the node will transmit,
//! where virtual time only advances on slots that are not globally frozen.
//! A freeze then amounts to pushing that deadline back by one, and only
//! nodes near a previous transmitter ever need touching.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::geometry_sim::{
    path_gain, replication_rng, sample_ppp, CellList, GridIndex, Point, SimOutcome, SimRegion, Z95,
};
use crate::math::SolverConfig;
use crate::model::{solve_tau, BackoffParams, LinkBudget};
use crate::units::{db_to_linear, dbm_to_watts};
use crate::{Error, Result};

/// Run-length and fidelity settings shared by every cell of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MacSimSettings {
    pub region: SimRegion,
    /// Total slots, warmup included.
    pub slots: u64,
    /// Leading fraction of slots excluded from the statistics.
    pub warmup_fraction: f64,
    /// Interferers are summed exactly while a single one could contribute at
    /// least `1/margin` of the decision level; the rest enter as their mean.
    pub cutoff_margin: f64,
}

impl MacSimSettings {
    /// 2 km torus, 62 500 slots of which 50 000 follow the warmup.
    pub fn desk_scale() -> Self {
        MacSimSettings {
            region: SimRegion {
                side_m: 2000.0,
                wraparound: true,
            },
            slots: 62_500,
            warmup_fraction: 0.2,
            cutoff_margin: 10.0,
        }
    }

    pub fn warmup_slots(&self) -> u64 {
        (self.slots as f64 * self.warmup_fraction).floor() as u64
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::invalid(
                "warmup_fraction",
                self.warmup_fraction,
                "must lie in [0, 1)",
            ));
        }
        if self.slots <= self.warmup_slots() {
            return Err(Error::invalid("slots", self.slots as f64, "must exceed the warmup"));
        }
        if !(self.cutoff_margin >= 1.0) {
            return Err(Error::invalid(
                "cutoff_margin",
                self.cutoff_margin,
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

/// Per-node backoff state at a point in the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeMacState {
    pub stage: u32,
    pub backoff_counter: u64,
    pub window: u64,
    pub position: Point,
    pub rx_position: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MacSimStats {
    /// Attempts per node per idle (non-frozen) slot.
    pub tau_hat: f64,
    /// Attempts per node per slot, frozen slots included.
    pub tau_hat_all_slots: f64,
    /// Fraction of attempts whose RTS missed the control SIR target.
    pub p_c_hat: f64,
    /// Fraction of node-slots spent frozen.
    pub busy_hat: f64,
    pub slots_run: u64,
    pub warmup_slots: u64,
    pub nodes: usize,
    pub attempts: u64,
    pub collisions: u64,
}

/// Minimum expected node count in the region.
pub const MIN_NODES: usize = 10;

/// Mean interference from a PPP of intensity `intensity` between radius
/// `inner` and the radius of the disk with the region's area.
fn tail_interference(intensity: f64, tx_power: f64, alpha: f64, inner: f64, area: f64) -> f64 {
    let outer = (area / PI).sqrt();
    if intensity == 0.0 || inner >= outer {
        return 0.0;
    }
    2.0 * PI * intensity * tx_power * (inner.powf(2.0 - alpha) - outer.powf(2.0 - alpha)) / (alpha - 2.0)
}

/// Longest stretch of virtual time the calendar covers directly.
const CALENDAR_SPAN: u64 = 1 << 12;

struct Network {
    pos: Vec<Point>,
    rx: Vec<Point>,
    stage: Vec<u32>,
    /// Virtual slot of the next transmission.
    deadline: Vec<u64>,
    /// Ring of per-slot hint lists. Every node has exactly one entry, filed
    /// at or before its deadline. Freezing only moves the deadline, and a
    /// node whose entry comes up early is simply refiled.
    calendar: Vec<Vec<u32>>,
}

impl Network {
    fn file(&mut self, node: u32, now: u64) {
        let at = self.deadline[node as usize].min(now + self.calendar.len() as u64 - 1);
        let len = self.calendar.len() as u64;
        self.calendar[(at % len) as usize].push(node);
    }

    fn schedule(&mut self, node: u32, at: u64, now: u64) {
        self.deadline[node as usize] = at;
        self.file(node, now);
    }

    /// Nodes whose deadline is `now`; early entries are refiled.
    fn due(&mut self, now: u64) -> Vec<u32> {
        let len = self.calendar.len() as u64;
        let entries = std::mem::take(&mut self.calendar[(now % len) as usize]);
        let mut due = Vec::new();
        for node in entries {
            let d = self.deadline[node as usize];
            debug_assert!(d >= now, "backoff counter went negative");
            if d == now {
                due.push(node);
            } else {
                self.file(node, now);
            }
        }
        due
    }
}

/// Simulates `settings.slots` contention slots on a PPP(λ) of nodes.
pub fn run_mac_sim(
    density: f64,
    link: &LinkBudget,
    backoff: &BackoffParams,
    threshold: f64,
    settings: &MacSimSettings,
    seed: u64,
) -> Result<MacSimStats> {
    run_mac_sim_with_states(density, link, backoff, threshold, settings, seed).map(|(stats, _)| stats)
}

/// [`run_mac_sim`] that also returns every node's state after the last slot.
pub fn run_mac_sim_with_states(
    density: f64,
    link: &LinkBudget,
    backoff: &BackoffParams,
    threshold: f64,
    settings: &MacSimSettings,
    seed: u64,
) -> Result<(MacSimStats, Vec<NodeMacState>)> {
    link.validate()?;
    settings.validate()?;
    if !(threshold > 0.0) {
        return Err(Error::invalid("threshold", threshold, "must be positive"));
    }
    let region = settings.region;
    let area = region.area();
    let expected = density * area;
    if !(expected >= MIN_NODES as f64) {
        return Err(Error::InsufficientNodes {
            expected,
            required: MIN_NODES,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let snap = sample_ppp(density, &region, link.link_distance_m, &mut rng)?;
    let n = snap.len();
    if n == 0 {
        return Err(Error::InsufficientNodes {
            expected,
            required: MIN_NODES,
        });
    }

    let alpha = link.path_loss_exp;
    let half_alpha = 0.5 * alpha;
    let p = link.tx_power_watts;
    let beta_c = link.control_target_sir;
    let signal = link.received_power();
    let margin = settings.cutoff_margin;
    // Beyond these radii one interferer contributes under 1/margin of the
    // sensing threshold or of the mean RTS decision level.
    let sense_cut = (margin * p / threshold).powf(1.0 / alpha);
    let rts_cut = (margin * beta_c).powf(1.0 / alpha) * link.link_distance_m;

    // Half-width cells trim the scanned area. Nodes are renumbered in cell
    // order so every scan walks contiguous memory.
    let node_grid = CellList::build(region, 0.5 * sense_cut, &snap.transmitters);
    let pos: Vec<Point> = node_grid.order().iter().map(|&i| snap.transmitters[i]).collect();
    let rx: Vec<Point> = node_grid.order().iter().map(|&i| snap.receivers[i]).collect();

    let span = backoff.window(backoff.max_stage).saturating_add(1).min(CALENDAR_SPAN);
    let mut net = Network {
        pos,
        rx,
        stage: vec![0; n],
        deadline: vec![0; n],
        calendar: vec![Vec::new(); span as usize],
    };
    for i in 0..n as u32 {
        let c = rng.random_range(0..backoff.window(0));
        net.schedule(i, c, 0);
    }

    let mut tx_grid = GridIndex::new(region, 0.5 * rts_cut);
    let mut sensed = vec![0.0f64; n];
    let mut touched: Vec<u32> = Vec::new();
    let mut prev: Vec<u32> = Vec::new();
    let mut now = 0u64;

    let warmup = settings.warmup_slots();
    let (mut attempts, mut collisions) = (0u64, 0u64);
    let (mut idle, mut node_slots) = (0u64, 0u64);

    for slot in 0..settings.slots {
        let counted = slot >= warmup;

        let far = tail_interference(prev.len() as f64 / area, p, alpha, sense_cut, area);
        if far >= threshold {
            // Everyone is frozen: nobody transmits and virtual time stands still.
            if counted {
                node_slots += n as u64;
            }
            prev.clear();
            continue;
        }

        // Once a node's partial sum reaches `need` it is busy whatever the
        // remaining gains are, so they are not drawn.
        let need = threshold - far;
        for &u in &prev {
            let src = net.pos[u as usize];
            node_grid.for_each_within(src, sense_cut, |v, d2| {
                let s = &mut sensed[v as usize];
                if v != u && *s < need {
                    if *s == 0.0 {
                        touched.push(v);
                    }
                    let g: f64 = Exp1.sample(&mut rng);
                    *s += g * p * path_gain(d2, half_alpha);
                }
            });
        }
        // A repeated entry finds its level already reset to zero, and
        // `far < threshold` here, so no node is frozen twice.
        let mut frozen = 0u64;
        for &v in &touched {
            let level = sensed[v as usize] + far;
            sensed[v as usize] = 0.0;
            if level >= threshold {
                frozen += 1;
                net.deadline[v as usize] += 1;
            }
        }
        touched.clear();

        let tx = net.due(now);

        for &u in &tx {
            tx_grid.insert(u, net.pos[u as usize]);
        }
        let near = tail_interference(tx.len() as f64 / area, p, alpha, rts_cut, area);
        let mut failures = 0u64;
        for &u in &tx {
            let dst = net.rx[u as usize];
            let mut interference = near;
            tx_grid.for_each_within(&net.pos, dst, rts_cut, |w, d2| {
                if w != u {
                    let g: f64 = Exp1.sample(&mut rng);
                    interference += g * p * path_gain(d2, half_alpha);
                }
            });
            let g: f64 = Exp1.sample(&mut rng);
            let ok = g * signal >= beta_c * interference;
            let stage = &mut net.stage[u as usize];
            if ok {
                *stage = 0;
            } else {
                failures += 1;
                *stage = (*stage + 1).min(backoff.max_stage);
            }
            let window = backoff.window(*stage);
            let c = rng.random_range(0..window);
            debug_assert!(c < window && window == backoff.window(net.stage[u as usize]));
            net.schedule(u, now + 1 + c, now);
        }
        tx_grid.clear_at(tx.iter().map(|&u| net.pos[u as usize]));

        if counted {
            attempts += tx.len() as u64;
            collisions += failures;
            idle += n as u64 - frozen;
            node_slots += n as u64;
        }
        prev = tx;
        now += 1;
    }

    let states = (0..n)
        .map(|i| NodeMacState {
            stage: net.stage[i],
            backoff_counter: net.deadline[i] - now,
            window: backoff.window(net.stage[i]),
            position: net.pos[i],
            rx_position: net.rx[i],
        })
        .collect();
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let stats = MacSimStats {
        tau_hat: ratio(attempts, idle),
        tau_hat_all_slots: ratio(attempts, node_slots),
        p_c_hat: ratio(collisions, attempts),
        busy_hat: 1.0 - ratio(idle, node_slots),
        slots_run: settings.slots,
        warmup_slots: warmup,
        nodes: n,
        attempts,
        collisions,
    };
    Ok((stats, states))
}

/// One cell of a τ table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableCell {
    pub density: f64,
    pub threshold_dbm: f64,
    pub control_target_sir_db: f64,
}

/// The 12-cell layout: λ ∈ {1e-4, 1e-3, 1e-2} × I_s ∈ {-40, -10} dBm ×
/// β_c ∈ {3, 10} dB, ordered by λ, then I_s, then β_c.
pub fn reference_cells() -> Vec<TableCell> {
    let mut cells = Vec::with_capacity(12);
    for density in [1e-4, 1e-3, 1e-2] {
        for threshold_dbm in [-40.0, -10.0] {
            for control_target_sir_db in [3.0, 10.0] {
                cells.push(TableCell {
                    density,
                    threshold_dbm,
                    control_target_sir_db,
                });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauTableRow {
    pub cell: TableCell,
    pub tau_analytic: f64,
    /// Mean of `tau_hat` over seeds with its 95% half-width.
    pub tau_sim: Option<SimOutcome>,
}

/// How the simulated column of a τ table is produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableSim {
    pub settings: MacSimSettings,
    pub seeds: usize,
    pub seed: u64,
}

/// Seed of run `rep` of cell `cell` derived from the experiment seed.
pub fn run_seed(seed: u64, cell: usize, rep: usize) -> u64 {
    replication_rng(seed, ((cell as u64) << 32) | rep as u64).random()
}

/// Analytic and, when `sim` is given, simulated τ for each cell. The link's
/// control target is overridden per cell.
pub fn tau_table(
    cells: &[TableCell],
    link: &LinkBudget,
    backoff: &BackoffParams,
    sim: Option<&TableSim>,
    cfg: &SolverConfig,
) -> Result<Vec<TauTableRow>> {
    let cell_link = |c: &TableCell| LinkBudget {
        control_target_sir: db_to_linear(c.control_target_sir_db),
        ..*link
    };
    let analytic = cells
        .iter()
        .map(|c| solve_tau(c.density, &cell_link(c), backoff, dbm_to_watts(c.threshold_dbm), cfg).map(|s| s.tau))
        .collect::<Result<Vec<f64>>>()?;

    let simulated: Vec<Option<SimOutcome>> = match sim {
        None => vec![None; cells.len()],
        Some(sim) => {
            if sim.seeds < 2 {
                return Err(Error::invalid(
                    "seeds",
                    sim.seeds as f64,
                    "need at least 2 for a confidence interval",
                ));
            }
            let jobs: Vec<(usize, usize)> = (0..cells.len())
                .flat_map(|c| (0..sim.seeds).map(move |r| (c, r)))
                .collect();
            let taus = jobs
                .par_iter()
                .map(|&(c, r)| {
                    let cell = &cells[c];
                    run_mac_sim(
                        cell.density,
                        &cell_link(cell),
                        backoff,
                        dbm_to_watts(cell.threshold_dbm),
                        &sim.settings,
                        run_seed(sim.seed, c, r),
                    )
                    .map(|s| s.tau_hat)
                })
                .collect::<Result<Vec<f64>>>()?;
            taus.chunks(sim.seeds)
                .map(|xs| {
                    let k = xs.len() as f64;
                    let mean = xs.iter().sum::<f64>() / k;
                    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
                    Some(SimOutcome {
                        estimate: mean,
                        half_width_95: Z95 * (var / k).sqrt(),
                        replications: xs.len(),
                        seed: sim.seed,
                    })
                })
                .collect()
        }
    };

    Ok(cells
        .iter()
        .zip(analytic)
        .zip(simulated)
        .map(|((&cell, tau_analytic), tau_sim)| TauTableRow {
            cell,
            tau_analytic,
            tau_sim,
        })
        .collect())
}
