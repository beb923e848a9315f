#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffOrder {
    First,
    Second,
}

/// Central finite difference with step `h = h_rel * max(|x|, 1)`.
pub fn central_diff<F>(f: F, x: f64, order: DiffOrder, h_rel: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let h = h_rel * x.abs().max(1.0);
    match order {
        DiffOrder::First => (f(x + h) - f(x - h)) / (2.0 * h),
        DiffOrder::Second => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
    }
}
