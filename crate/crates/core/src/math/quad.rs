//! One-dimensional quadrature.
//!
//! Semi-infinite integrals are mapped onto `[0, 1)` with
//! `v = a + c t / (1 - t)` (for `a > 0`, `c = a`, i.e. `v = a / (1 - t)`)
//! and integrated with globally adaptive Gauss-Kronrod 7/15 rules, which
//! never evaluate the singular endpoint `t = 1`.

use crate::{Error, Result};

const REL_TOL: f64 = 1e-11;
const ABS_TOL: f64 = 1e-300;
const MAX_INTERVALS: usize = 4000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

fn adaptive_gk<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    let mut segments = vec![gk15(&f, a, b)];
    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let err: f64 = segments.iter().map(|s| s.error).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Divergence {
                estimate: total,
                error_estimate: err,
            });
        }
        if err <= (REL_TOL * total.abs()).max(ABS_TOL) {
            return Ok(total);
        }
        if segments.len() >= MAX_INTERVALS {
            return Err(Error::Divergence {
                estimate: total,
                error_estimate: err,
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            // Interval can no longer be split in floating point.
            return Err(Error::Divergence {
                estimate: total,
                error_estimate: err,
            });
        }
        segments.push(gk15(&f, s.a, mid));
        segments.push(gk15(&f, mid, s.b));
    }
}

/// Integrates `g` over `[a, inf)`.
pub fn integrate_semi_infinite<G>(g: G, a: f64) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    if !a.is_finite() {
        return Err(Error::invalid("lower limit", a, "must be finite"));
    }
    let scale = if a > 0.0 { a } else { 1.0 };
    let mapped = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - t;
        let v = a + scale * t / one_minus;
        g(v) * scale / (one_minus * one_minus)
    };
    adaptive_gk(mapped, 0.0, 1.0)
}

/// Recursive adaptive Simpson quadrature on a finite interval.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(&f, a, b, fa, fm, fb, whole, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gaussian_moment() {
        let v = integrate_semi_infinite(|v| v * (-v * v).exp(), 0.0).unwrap();
        assert!(rel(v, 0.5) < 1e-8);
    }

    #[test]
    fn cubic_power_law() {
        let v = integrate_semi_infinite(|v| v.powi(-3), 1.0).unwrap();
        assert!(rel(v, 0.5) < 1e-8);
    }

    #[test]
    fn rayleigh_kernel_matches_arctan_form() {
        // int_a^inf beta v/(beta + v^4) dv = sqrt(beta)/2 * atan(sqrt(beta)/a^2)
        let beta: f64 = 4.0;
        let a: f64 = 2.0;
        let v = integrate_semi_infinite(|v| beta * v / (beta + v.powi(4)), a).unwrap();
        let closed = beta.sqrt() / 2.0 * (beta.sqrt() / (a * a)).atan();
        assert!(rel(v, closed) < 1e-8);
        // 40-digit reference: 0.4636476090008061162...
        assert!(rel(v, 0.463_647_609_000_806_1) < 1e-8);
    }

    /// Integrand, lower limit, exact value.
    type Case = (Box<dyn Fn(f64) -> f64>, f64, f64);

    /// Five integrands with elementary antiderivatives.
    #[test]
    fn analytic_battery() {
        let cases: Vec<Case> = vec![
            (Box::new(|v: f64| (-v).exp()), 0.0, 1.0),
            (Box::new(|v: f64| (-2.0 * v).exp()), 1.5, (-3.0f64).exp() / 2.0),
            (Box::new(|v: f64| 1.0 / (1.0 + v * v)), 0.0, std::f64::consts::FRAC_PI_2),
            (Box::new(|v: f64| v.powf(-2.5)), 3.0, 3.0f64.powf(-1.5) / 1.5),
            (Box::new(|v: f64| v / (1.0 + v * v).powi(2)), 2.0, 0.5 / 5.0),
        ];
        for (i, (g, a, want)) in cases.into_iter().enumerate() {
            let got = integrate_semi_infinite(g, a).unwrap();
            assert!(rel(got, want) < 1e-8, "case {i}: {got} vs {want}");
        }
    }

    #[test]
    fn slowly_decaying_alpha_three_kernel() {
        // g ~ v^-2, so the mapped integrand tends to a nonzero constant at t = 1.
        // Reference from mpmath: 0.83564884826472105334.
        let got = integrate_semi_infinite(|v| v / (1.0 + v.powi(3)), 1.0).unwrap();
        assert!(rel(got, 0.835_648_848_264_721_1) < 1e-8);
    }

    #[test]
    fn non_integrable_reports_divergence() {
        let err = integrate_semi_infinite(|v| 1.0 / v, 1.0).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn simpson_on_polynomial() {
        let v = adaptive_simpson(|x| x.powi(3) - x, 0.0, 2.0, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
    }
}
