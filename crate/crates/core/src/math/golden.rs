use crate::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes a unimodal `f` on `[lo, hi]` by golden-section search.
/// Returns the abscissa of the best point found.
pub fn golden_section_max<F>(f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(lo < hi) {
        return Err(Error::invalid("golden_section interval", hi - lo, "must have lo < hi"));
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= tol * (a.abs() + b.abs()).max(1.0) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let candidates = [(lo, f(lo)), (c, fc), (mid, f(mid)), (d, fd), (hi, f(hi))];
    let best = candidates
        .iter()
        .filter(|(_, v)| !v.is_nan())
        .fold(None, |acc: Option<(f64, f64)>, &(x, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((x, v)),
        })
        .ok_or(Error::NonFinite {
            op: "golden_section_max",
            x: mid,
        })?;
    Ok(best.0)
}
