//! Error function.
//!
//! For |x| <= 3 the Taylor-type series
//! `erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n (2x^2)^n x / (1*3*...*(2n+1))`
//! is used. Every term is positive, so there is no cancellation. Between 3
//! and 6 the complementary function comes from its continued fraction, and
//! beyond 6 the result saturates (erfc(6) < 2.2e-17).

use std::f64::consts::PI;

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
const SERIES_LIMIT: f64 = 3.0;
const SATURATION: f64 = 6.0;

pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let a = x.abs();
    let v = if a <= SERIES_LIMIT {
        erf_series(a)
    } else if a < SATURATION {
        1.0 - erfc_continued_fraction(a)
    } else {
        1.0
    };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > SERIES_LIMIT {
        if x > 27.0 {
            return 0.0;
        }
        erfc_continued_fraction(x)
    } else {
        1.0 - erf(x)
    }
}

fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0u32;
    loop {
        n += 1;
        term *= 2.0 * x2 / f64::from(2 * n + 1);
        sum += term;
        if term <= sum * 1e-17 || n > 200 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

/// erfc(x) = exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
/// evaluated with the modified Lentz algorithm. Valid for x > 0, fast for x > 2.
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..500 {
        let an = f64::from(n) * 0.5;
        d = x + an * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}
