use proptest::prelude::*;

use csopt::math::SolverConfig;
use csopt::model::{
    ase, busy_prob, collision_prob, sensing_range, solve_tau, success_prob_closed, success_prob_general, BackoffParams,
    LinkBudget,
};
use csopt::units::dbm_to_watts;

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

fn link(beta: f64, beta_c: f64, rt: f64) -> LinkBudget {
    LinkBudget::new(1.0, rt, 4.0, beta, beta_c).unwrap()
}

fn backoff() -> impl Strategy<Value = BackoffParams> {
    (prop::sample::select(vec![8u32, 16, 32, 64]), 1u32..=32).prop_map(|(w, m)| BackoffParams::new(w, m).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn busy_prob_rises_with_contenders_and_falls_with_threshold(
        density in 1e-5f64..1.0,
        tau in 0.001f64..0.5,
        th_dbm in -90.0f64..0.0,
    ) {
        let l = link(10.0, 10.0, 50.0);
        let th = dbm_to_watts(th_dbm);
        let base = busy_prob(density, tau, &l, th).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!(busy_prob(density, tau * 1.5, &l, th).unwrap() >= base);
        prop_assert!(busy_prob(density, tau, &l, th * 2.0).unwrap() <= base);
    }

    #[test]
    fn collision_prob_rises_with_contenders_and_target(
        density in 1e-5f64..1.0,
        tau in 0.001f64..0.5,
        beta_c in 1.0f64..20.0,
    ) {
        let base = collision_prob(density, tau, &link(10.0, beta_c, 50.0)).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!(collision_prob(density * 2.0, tau, &link(10.0, beta_c, 50.0)).unwrap() >= base);
        prop_assert!(collision_prob(density, tau, &link(10.0, beta_c * 2.0, 50.0)).unwrap() >= base);
    }

    #[test]
    fn tau_is_a_fixed_point_that_falls_with_density(
        density in 1e-5f64..0.1,
        th_dbm in -80.0f64..-5.0,
        b in backoff(),
    ) {
        let cfg = SolverConfig::default();
        let l = link(10.0, 10.0, 50.0);
        let th = dbm_to_watts(th_dbm);
        let s = solve_tau(density, &l, &b, th, &cfg).unwrap();
        prop_assert!(s.tau > 0.0 && s.tau <= 1.0);
        prop_assert!(s.residual <= 1e-9);
        let denser = solve_tau(density * 4.0, &l, &b, th, &cfg).unwrap();
        prop_assert!(denser.tau <= s.tau * (1.0 + 1e-9));
    }

    #[test]
    fn sensing_range_shrinks_as_threshold_rises(
        density in 1e-5f64..1.0,
        tau in 0.0f64..1.0,
        th_dbm in -90.0f64..10.0,
    ) {
        let th = dbm_to_watts(th_dbm);
        let r = sensing_range(density, tau, 1.0, th, 4.0).unwrap();
        let r_hi = sensing_range(density, tau, 1.0, th * 1.5, 4.0).unwrap();
        prop_assert!(r > 0.0);
        prop_assert!(r_hi <= r);
    }

    #[test]
    fn success_prob_rises_with_range_and_falls_with_target(
        lambda_t in 1e-6f64..1e-2,
        beta in 0.1f64..100.0,
        rt in 10.0f64..200.0,
        k in 1.0f64..50.0,
    ) {
        let l = link(beta, 10.0, rt);
        let rs = k * rt;
        let p = success_prob_closed(lambda_t, &l, rs).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(success_prob_closed(lambda_t, &l, rs * 1.2).unwrap() >= p);
        prop_assert!(success_prob_closed(lambda_t, &link(beta * 2.0, 10.0, rt), rs).unwrap() <= p);
    }

    #[test]
    fn general_success_prob_matches_closed_form(
        lambda_t in 1e-6f64..1e-2,
        beta in 0.1f64..100.0,
        rt in 10.0f64..200.0,
        k in 1.0f64..50.0,
    ) {
        let l = link(beta, 10.0, rt);
        let closed = success_prob_closed(lambda_t, &l, k * rt).unwrap();
        let general = success_prob_general(lambda_t, &l, k * rt).unwrap();
        prop_assert!(rel(closed, general) <= 1e-6, "{} vs {}", closed, general);
    }

    #[test]
    fn power_and_threshold_scale_together(
        density in 1e-4f64..1.0,
        th_dbm in -80.0f64..0.0,
        scale_db in -30.0f64..30.0,
        b in backoff(),
    ) {
        let cfg = SolverConfig::default();
        let l = link(10.0, 10.0, 50.0);
        let k = 10f64.powf(scale_db / 10.0);
        let th = dbm_to_watts(th_dbm);
        let a = ase(density, &l, &b, th, &cfg).unwrap();
        let s = ase(density, &l.with_power(k), &b, k * th, &cfg).unwrap();
        for (x, y) in [
            (a.contention.tau, s.contention.tau),
            (a.sense_range_m, s.sense_range_m),
            (a.active_density, s.active_density),
            (a.success_prob, s.success_prob),
            (a.ase, s.ase),
        ] {
            prop_assert!(rel(x, y) <= 1e-12, "{} vs {}", x, y);
        }
    }
}
