//! Snapshot Monte Carlo for Poisson bipolar networks: PPP generation,
//! Matérn type-II thinning and Rayleigh-faded SIR, used as an oracle for
//! the analytic model.

mod region;

pub use region::{CellList, GridIndex, Point, SimRegion};

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::math::SolverConfig;
use crate::model::{sensing_range, solve_tau, BackoffParams, LinkBudget};
use crate::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A Monte Carlo estimate with its normal-approximation 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimOutcome {
    pub estimate: f64,
    pub half_width_95: f64,
    pub replications: usize,
    pub seed: u64,
}

impl SimOutcome {
    /// Whether `value` lies within `k` half-widths of the estimate.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.half_width_95
    }
}

/// One realization of the bipolar network.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub region: SimRegion,
    pub transmitters: Vec<Point>,
    /// `receivers[i]` is paired with `transmitters[i]`.
    pub receivers: Vec<Point>,
    /// Contention marks, i.i.d. uniform on [0, 1).
    pub marks: Vec<f64>,
}

impl Snapshot {
    pub fn len(&self) -> usize {
        self.transmitters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transmitters.is_empty()
    }
}

/// RNG for replication `rep` of the experiment seeded with `seed`. Each
/// replication owns its stream, so results do not depend on scheduling.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Received power per watt at squared distance `d2`, where `half_alpha`
/// is α/2. The common α = 4 case avoids `powf`.
#[inline]
pub(crate) fn path_gain(d2: f64, half_alpha: f64) -> f64 {
    if half_alpha == 2.0 {
        1.0 / (d2 * d2)
    } else {
        d2.powf(-half_alpha)
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::invalid(
            "expected point count",
            mean,
            "must be finite and non-negative",
        ));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|_| Error::invalid("expected point count", mean, "too large"))?;
    let n: f64 = dist.sample(rng);
    Ok(n as usize)
}

fn uniform_point<R: Rng + ?Sized>(region: &SimRegion, rng: &mut R) -> Point {
    [rng.random::<f64>() * region.side_m, rng.random::<f64>() * region.side_m]
}

/// Homogeneous PPP of intensity `density` on the region, each point paired
/// with a receiver at distance `link_distance` in a uniform direction.
pub fn sample_ppp<R: Rng + ?Sized>(
    density: f64,
    region: &SimRegion,
    link_distance: f64,
    rng: &mut R,
) -> Result<Snapshot> {
    if !(density >= 0.0) {
        return Err(Error::invalid("density", density, "must be non-negative"));
    }
    let n = poisson_count(density * region.area(), rng)?;
    let mut snap = Snapshot {
        region: *region,
        transmitters: Vec::with_capacity(n),
        receivers: Vec::with_capacity(n),
        marks: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let tx = uniform_point(region, rng);
        let phi = 2.0 * PI * rng.random::<f64>();
        let rx = region.wrap([tx[0] + link_distance * phi.cos(), tx[1] + link_distance * phi.sin()]);
        snap.transmitters.push(tx);
        snap.receivers.push(rx);
        snap.marks.push(rng.random::<f64>());
    }
    Ok(snap)
}

/// Bernoulli(τ) contention followed by Matérn type-II thinning: a contender
/// survives iff no other contender within `sense_range` holds a smaller mark.
/// Returns the indices of survivors in ascending order.
pub fn matern_thin<R: Rng + ?Sized>(
    snapshot: &Snapshot,
    tau: f64,
    sense_range: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid("tau", tau, "must lie in [0, 1]"));
    }
    if !(sense_range >= 0.0 && sense_range.is_finite()) {
        return Err(Error::invalid(
            "sense_range",
            sense_range,
            "must be finite and non-negative",
        ));
    }
    let contenders: Vec<usize> = (0..snapshot.len())
        .filter(|_| tau >= 1.0 || rng.random::<f64>() < tau)
        .collect();
    if sense_range == 0.0 {
        return Ok(contenders);
    }

    let pts: Vec<Point> = contenders.iter().map(|&i| snapshot.transmitters[i]).collect();
    let grid = GridIndex::build(snapshot.region, sense_range, &pts);
    let retained: Vec<usize> = contenders
        .iter()
        .enumerate()
        .filter(|&(k, &i)| {
            let mark = snapshot.marks[i];
            let mut beaten = false;
            grid.for_each_within(&pts, pts[k], sense_range, |j, _| {
                let j = j as usize;
                if j != k && snapshot.marks[contenders[j]] < mark {
                    beaten = true;
                }
            });
            !beaten
        })
        .map(|(_, &i)| i)
        .collect();

    debug_assert!(conflict_free(snapshot, &retained, sense_range));
    Ok(retained)
}

/// Whether no two of the `retained` transmitters lie strictly closer than
/// `sense_range`.
pub fn conflict_free(snapshot: &Snapshot, retained: &[usize], sense_range: f64) -> bool {
    let pts: Vec<Point> = retained.iter().map(|&i| snapshot.transmitters[i]).collect();
    let grid = GridIndex::build(snapshot.region, sense_range.max(1e-9), &pts);
    let r2 = sense_range * sense_range;
    pts.iter().enumerate().all(|(k, &p)| {
        let mut ok = true;
        grid.for_each_within(&pts, p, sense_range, |j, d2| {
            if j as usize != k && d2 < r2 {
                ok = false;
            }
        });
        ok
    })
}

fn require_replications(replications: usize) -> Result<()> {
    if replications < 2 {
        return Err(Error::invalid(
            "replications",
            replications as f64,
            "need at least 2 for a confidence interval",
        ));
    }
    Ok(())
}

fn mean_and_half_width(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, Z95 * (var / n).sqrt())
}

/// Empirical intensity of the Matérn type-II process built from a PPP of
/// intensity `density` with contention probability `tau`.
pub fn estimate_active_density(
    density: f64,
    tau: f64,
    sense_range: f64,
    region: &SimRegion,
    replications: usize,
    seed: u64,
) -> Result<SimOutcome> {
    require_replications(replications)?;
    region.check_scale(sense_range)?;
    let per_rep = (0..replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep);
            let snap = sample_ppp(density, region, 0.0, &mut rng)?;
            let kept = matern_thin(&snap, tau, sense_range, &mut rng)?;
            Ok(kept.len() as f64 / region.area())
        })
        .collect::<Result<Vec<f64>>>()?;
    let (estimate, half_width_95) = mean_and_half_width(&per_rep);
    Ok(SimOutcome {
        estimate,
        half_width_95,
        replications,
        seed,
    })
}

/// Fraction of replications in which the aggregate faded interference
/// `Σ g_u d_u^-α P` from contenders of intensity λτ, measured at the centre
/// of the region, reaches `threshold`.
pub fn estimate_busy_prob(
    density: f64,
    tau: f64,
    link: &LinkBudget,
    threshold: f64,
    region: &SimRegion,
    replications: usize,
    seed: u64,
) -> Result<SimOutcome> {
    link.validate()?;
    require_replications(replications)?;
    if !(threshold > 0.0) {
        return Err(Error::invalid("threshold", threshold, "must be positive"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid("tau", tau, "must lie in [0, 1]"));
    }
    let probe = region.center();
    let p = link.tx_power_watts;
    let half_alpha = 0.5 * link.path_loss_exp;

    let busy = (0..replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep);
            let n = poisson_count(density * tau * region.area(), &mut rng)?;
            let mut interference = 0.0;
            for _ in 0..n {
                let x = uniform_point(region, &mut rng);
                let g: f64 = Exp1.sample(&mut rng);
                interference += g * p * path_gain(region.dist2(probe, x), half_alpha);
            }
            Ok(interference >= threshold)
        })
        .collect::<Result<Vec<bool>>>()?;

    let hits = busy.iter().filter(|&&b| b).count() as f64;
    let n = replications as f64;
    let est = hits / n;
    Ok(SimOutcome {
        estimate: est,
        half_width_95: Z95 * (est * (1.0 - est) / n).sqrt(),
        replications,
        seed,
    })
}

/// Simulated spatial performance at one sensing threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuccessEstimate {
    /// Analytic τ used for the contention thinning.
    pub tau: f64,
    /// Analytic mean sensing range used as the exclusion radius.
    pub sense_range_m: f64,
    pub success_prob: SimOutcome,
    pub active_density: SimOutcome,
    pub ase: SimOutcome,
}

/// Retained links below this total make the success estimate meaningless.
pub const MIN_RETAINED: usize = 100;

/// Snapshot estimate of p_s, λ_t and η at threshold `threshold`.
///
/// Contention uses the analytic τ, and the exclusion radius is the analytic
/// mean sensing range. Every retained link is then tested for
/// `g r_t^-α P ≥ β I` against the other retained transmitters, with fresh
/// unit-mean exponential gains on every ordered pair.
#[allow(clippy::too_many_arguments)]
pub fn estimate_success_and_ase(
    density: f64,
    link: &LinkBudget,
    backoff: &BackoffParams,
    threshold: f64,
    region: &SimRegion,
    replications: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<SuccessEstimate> {
    require_replications(replications)?;
    let contention = solve_tau(density, link, backoff, threshold, cfg)?;
    let tau = contention.tau;
    let range = sensing_range(density, tau, link.tx_power_watts, threshold, link.path_loss_exp)?;
    region.check_scale(range.max(link.link_distance_m))?;

    let signal = link.received_power();
    let beta = link.target_sir;
    let p = link.tx_power_watts;
    let half_alpha = 0.5 * link.path_loss_exp;

    // (retained, successes) per replication
    let per_rep = (0..replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep);
            // PPP(λτ) is equal in law to a Bernoulli(τ) thinning of PPP(λ).
            let snap = sample_ppp(density * tau, region, link.link_distance_m, &mut rng)?;
            let kept = matern_thin(&snap, 1.0, range, &mut rng)?;
            let mut successes = 0usize;
            for &i in &kept {
                let rx = snap.receivers[i];
                let mut interference = 0.0;
                for &j in &kept {
                    if j != i {
                        let g: f64 = Exp1.sample(&mut rng);
                        interference += g * p * path_gain(region.dist2(snap.transmitters[j], rx), half_alpha);
                    }
                }
                let g: f64 = Exp1.sample(&mut rng);
                if g * signal >= beta * interference {
                    successes += 1;
                }
            }
            Ok((kept.len(), successes))
        })
        .collect::<Result<Vec<(usize, usize)>>>()?;

    let retained: usize = per_rep.iter().map(|r| r.0).sum();
    if retained < MIN_RETAINED {
        return Err(Error::InsufficientRetained {
            retained,
            required: MIN_RETAINED,
        });
    }
    let area = region.area();
    let rate = (1.0 + beta).log2();
    let counts: Vec<f64> = per_rep.iter().map(|r| r.0 as f64 / area).collect();
    let succ: Vec<f64> = per_rep.iter().map(|r| r.1 as f64 * rate / area).collect();
    let (lambda_t, lambda_hw) = mean_and_half_width(&counts);
    let (eta, eta_hw) = mean_and_half_width(&succ);

    // Ratio estimator Σs/Σc with its delta-method variance.
    let total_succ: usize = per_rep.iter().map(|r| r.1).sum();
    let ps = total_succ as f64 / retained as f64;
    let n = replications as f64;
    let mean_c = retained as f64 / n;
    let resid = per_rep
        .iter()
        .map(|&(c, s)| {
            let e = s as f64 - ps * c as f64;
            e * e
        })
        .sum::<f64>()
        / (n - 1.0);
    let ps_hw = Z95 * (resid / n).sqrt() / mean_c;

    let outcome = |estimate, half_width_95| SimOutcome {
        estimate,
        half_width_95,
        replications,
        seed,
    };
    Ok(SuccessEstimate {
        tau,
        sense_range_m: range,
        success_prob: outcome(ps, ps_hw),
        active_density: outcome(lambda_t, lambda_hw),
        ase: outcome(eta, eta_hw),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{active_density, busy_prob};
    use crate::units::dbm_to_watts;

    fn link() -> LinkBudget {
        LinkBudget::new(1.0, 50.0, 4.0, 10.0, 10.0).unwrap()
    }

    #[test]
    fn zero_density_gives_empty_snapshot() {
        let region = SimRegion::torus(1000.0).unwrap();
        let snap = sample_ppp(0.0, &region, 50.0, &mut replication_rng(1, 0)).unwrap();
        assert!(snap.is_empty());
    }

    #[test]
    fn receivers_sit_at_link_distance() {
        let region = SimRegion::torus(500.0).unwrap();
        let snap = sample_ppp(1e-3, &region, 50.0, &mut replication_rng(3, 0)).unwrap();
        assert!(snap.len() > 100);
        for (t, r) in snap.transmitters.iter().zip(&snap.receivers) {
            assert!((region.dist2(*t, *r).sqrt() - 50.0).abs() < 1e-9);
        }
        assert!(snap.marks.iter().all(|m| (0.0..1.0).contains(m)));
    }

    #[test]
    fn mean_count_matches_intensity() {
        // λ = 1e-4 on a 10 km square: 10^4 nodes on average.
        let region = SimRegion::new(10_000.0, false).unwrap();
        let counts: Vec<f64> = (0..200)
            .map(|rep| {
                sample_ppp(1e-4, &region, 50.0, &mut replication_rng(9, rep))
                    .unwrap()
                    .len() as f64
            })
            .collect();
        let (mean, hw) = mean_and_half_width(&counts);
        assert!((mean - 1e4).abs() < 3.0 * hw.max(1.0), "{mean} ± {hw}");
    }

    #[test]
    fn ripley_k_matches_complete_spatial_randomness() {
        // K(r) = πr² for a PPP. Torus avoids edge correction.
        let region = SimRegion::torus(1000.0).unwrap();
        let r = 40.0;
        let ratios: Vec<f64> = (0..1000)
            .map(|rep| {
                let snap = sample_ppp(2e-4, &region, 0.0, &mut replication_rng(17, rep)).unwrap();
                let n = snap.len() as f64;
                let grid = GridIndex::build(region, r, &snap.transmitters);
                let mut pairs = 0usize;
                for (k, &p) in snap.transmitters.iter().enumerate() {
                    grid.for_each_within(&snap.transmitters, p, r, |j, _| {
                        if j as usize != k {
                            pairs += 1;
                        }
                    });
                }
                let k_hat = region.area() * pairs as f64 / (n * (n - 1.0));
                k_hat / (PI * r * r)
            })
            .collect();
        let (mean, hw) = mean_and_half_width(&ratios);
        assert!((mean - 1.0).abs() < 3.0 * hw, "{mean} ± {hw}");
    }

    #[test]
    fn thinning_edge_cases() {
        let region = SimRegion::torus(500.0).unwrap();
        let mut rng = replication_rng(5, 0);
        let snap = sample_ppp(1e-3, &region, 10.0, &mut rng).unwrap();
        assert!(matern_thin(&snap, 0.0, 20.0, &mut rng).unwrap().is_empty());
        assert_eq!(matern_thin(&snap, 1.0, 0.0, &mut rng).unwrap().len(), snap.len());
        assert!(matern_thin(&snap, 1.5, 20.0, &mut rng).is_err());
    }

    #[test]
    fn retained_set_is_conflict_free_and_shrinks_with_range() {
        let region = SimRegion::torus(800.0).unwrap();
        let mut last = usize::MAX;
        for rs in [5.0, 10.0, 20.0, 40.0, 80.0] {
            let mut rng = replication_rng(21, 0);
            let snap = sample_ppp(2e-3, &region, 10.0, &mut rng).unwrap();
            let kept = matern_thin(&snap, 1.0, rs, &mut rng).unwrap();
            assert!(conflict_free(&snap, &kept, rs));
            assert!(kept.len() <= last);
            last = kept.len();
        }
    }

    #[test]
    fn retained_density_matches_matern_formula() {
        let rs = 10.0;
        let region = SimRegion::torus(40.0 * rs).unwrap();
        for x in [0.1, 1.0, 5.0] {
            let tau = 0.5;
            let lambda = x / (PI * rs * rs * tau);
            let sim = estimate_active_density(lambda, tau, rs, &region, 500, 11).unwrap();
            let exact = active_density(lambda, tau, rs).unwrap();
            assert!(
                (sim.estimate / exact - 1.0).abs() < 0.02,
                "x={x}: {} vs {exact}",
                sim.estimate
            );
        }
    }

    #[test]
    fn busy_estimate_matches_erf_law() {
        let region = SimRegion::torus(2000.0).unwrap();
        let th = dbm_to_watts(-40.0);
        let sim = estimate_busy_prob(1e-3, 0.05, &link(), th, &region, 20_000, 7).unwrap();
        let exact = busy_prob(1e-3, 0.05, &link(), th).unwrap();
        assert!(sim.covers(exact, 3.0), "{sim:?} vs {exact}");
        let none = estimate_busy_prob(1e-3, 0.0, &link(), th, &region, 100, 7).unwrap();
        assert_eq!(none.estimate, 0.0);
    }

    #[test]
    fn estimates_are_reproducible() {
        let region = SimRegion::torus(1500.0).unwrap();
        let b = BackoffParams::new(16, 32).unwrap();
        let cfg = SolverConfig::default();
        let run = || estimate_success_and_ase(0.2, &link(), &b, dbm_to_watts(-45.0), &region, 4, 99, &cfg).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn tiny_sir_target_always_succeeds() {
        let region = SimRegion::torus(1500.0).unwrap();
        let b = BackoffParams::new(16, 32).unwrap();
        let l = link().with_target_sir(1e-12);
        let est = estimate_success_and_ase(
            0.2,
            &l,
            &b,
            dbm_to_watts(-45.0),
            &region,
            4,
            1,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(est.success_prob.estimate > 0.999);
    }

    #[test]
    fn too_few_retained_links_is_an_error() {
        let region = SimRegion::torus(300.0).unwrap();
        let b = BackoffParams::new(16, 32).unwrap();
        let err = estimate_success_and_ase(
            0.2,
            &link(),
            &b,
            dbm_to_watts(-45.0),
            &region,
            2,
            1,
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientRetained { .. }));
    }
}
