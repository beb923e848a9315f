use serde::Serialize;

use crate::{Error, Result};

pub type Point = [f64; 2];

/// Square simulation window `[0, L)²`, optionally with periodic boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimRegion {
    pub side_m: f64,
    pub wraparound: bool,
}

impl SimRegion {
    pub fn torus(side_m: f64) -> Result<Self> {
        Self::new(side_m, true)
    }

    pub fn new(side_m: f64, wraparound: bool) -> Result<Self> {
        if !(side_m > 0.0 && side_m.is_finite()) {
            return Err(Error::invalid("side_m", side_m, "must be positive and finite"));
        }
        Ok(SimRegion { side_m, wraparound })
    }

    /// Rejects a bounded square too small for edge effects to be ignored at
    /// interaction range `range`.
    pub fn check_scale(&self, range: f64) -> Result<()> {
        if !self.wraparound && self.side_m < 20.0 * range {
            return Err(Error::invalid(
                "side_m",
                self.side_m,
                "bounded region must be at least 20 times the interaction range",
            ));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.side_m * self.side_m
    }

    pub fn center(&self) -> Point {
        [0.5 * self.side_m, 0.5 * self.side_m]
    }

    /// Displacement `b - a` under the region metric.
    pub fn delta(&self, a: Point, b: Point) -> [f64; 2] {
        let mut dx = b[0] - a[0];
        let mut dy = b[1] - a[1];
        if self.wraparound {
            dx = wrap_half(dx, self.side_m);
            dy = wrap_half(dy, self.side_m);
        }
        [dx, dy]
    }

    pub fn dist2(&self, a: Point, b: Point) -> f64 {
        let [dx, dy] = self.delta(a, b);
        dx * dx + dy * dy
    }

    /// Maps a point back into the window on a torus; identity otherwise.
    pub fn wrap(&self, p: Point) -> Point {
        if !self.wraparound {
            return p;
        }
        let l = self.side_m;
        [p[0].rem_euclid(l), p[1].rem_euclid(l)]
    }
}

/// Folds a displacement between points of `[0, l)` into `[-l/2, l/2]`.
#[inline]
fn wrap_half(d: f64, l: f64) -> f64 {
    if d > 0.5 * l {
        d - l
    } else if d < -0.5 * l {
        d + l
    } else {
        d
    }
}

/// Uniform bucket grid over the region for fixed-radius neighbor queries.
#[derive(Debug, Clone)]
pub struct GridIndex {
    region: SimRegion,
    cell: f64,
    n: usize,
    buckets: Vec<Vec<u32>>,
}

impl GridIndex {
    /// Grid whose cells are at least `min_cell` wide, capped at 512 per side.
    pub fn new(region: SimRegion, min_cell: f64) -> Self {
        let n = ((region.side_m / min_cell.max(f64::MIN_POSITIVE)).floor() as usize).clamp(1, 512);
        GridIndex {
            region,
            cell: region.side_m / n as f64,
            n,
            buckets: vec![Vec::new(); n * n],
        }
    }

    pub fn build(region: SimRegion, min_cell: f64, points: &[Point]) -> Self {
        let mut grid = Self::new(region, min_cell);
        for (i, &p) in points.iter().enumerate() {
            grid.insert(i as u32, p);
        }
        grid
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let c = |x: f64| ((x / self.cell).floor().max(0.0) as usize).min(self.n - 1);
        (c(p[0]), c(p[1]))
    }

    /// Row-major index of the cell containing `p`.
    pub fn cell_key(&self, p: Point) -> usize {
        let (cx, cy) = self.cell_of(p);
        cy * self.n + cx
    }

    pub fn insert(&mut self, id: u32, p: Point) {
        let (cx, cy) = self.cell_of(p);
        self.buckets[cy * self.n + cx].push(id);
    }

    /// Empties only the buckets holding `points`, which is cheaper than
    /// [`GridIndex::clear`] when few points were inserted.
    pub fn clear_at<I: IntoIterator<Item = Point>>(&mut self, points: I) {
        for p in points {
            let (cx, cy) = self.cell_of(p);
            self.buckets[cy * self.n + cx].clear();
        }
    }

    pub fn clear(&mut self) {
        for b in &mut self.buckets {
            b.clear();
        }
    }

    /// Calls `visit(id, d²)` for every indexed point within distance `r` of
    /// `p`. `points` must be the slice the ids refer to.
    pub fn for_each_within<F>(&self, points: &[Point], p: Point, r: f64, mut visit: F)
    where
        F: FnMut(u32, f64),
    {
        let r2 = r * r;
        let reach = (r / self.cell).ceil() as isize;
        let (cx, cy) = self.cell_of(p);
        let n = self.n as isize;
        let span = |c: usize| -> (isize, isize) {
            if self.region.wraparound && 2 * reach + 1 >= n {
                (0, n - 1)
            } else if self.region.wraparound {
                (c as isize - reach, c as isize + reach)
            } else {
                ((c as isize - reach).max(0), (c as isize + reach).min(n - 1))
            }
        };
        let (x0, x1) = span(cx);
        let (y0, y1) = span(cy);
        for gy in y0..=y1 {
            let wy = gy.rem_euclid(n) as usize;
            for gx in x0..=x1 {
                let wx = gx.rem_euclid(n) as usize;
                for &id in &self.buckets[wy * self.n + wx] {
                    let d2 = self.region.dist2(p, points[id as usize]);
                    if d2 <= r2 {
                        visit(id, d2);
                    }
                }
            }
        }
    }
}

/// Static counterpart of [`GridIndex`]: points are stored sorted by cell, so
/// each cell is a contiguous slice and torus wrapping is resolved once per
/// cell rather than once per point.
#[derive(Debug, Clone)]
pub struct CellList {
    region: SimRegion,
    cell: f64,
    n: usize,
    start: Vec<u32>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    order: Vec<usize>,
}

impl CellList {
    pub fn build(region: SimRegion, min_cell: f64, points: &[Point]) -> Self {
        let grid = GridIndex::new(region, min_cell);
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by_key(|&i| grid.cell_key(points[i]));
        let mut start = vec![0u32; grid.n * grid.n + 1];
        for &i in &order {
            start[grid.cell_key(points[i]) + 1] += 1;
        }
        for c in 1..start.len() {
            start[c] += start[c - 1];
        }
        CellList {
            region,
            cell: grid.cell,
            n: grid.n,
            start,
            xs: order.iter().map(|&i| points[i][0]).collect(),
            ys: order.iter().map(|&i| points[i][1]).collect(),
            order,
        }
    }

    /// `order()[k]` is the input index of the point stored at slot `k`; ids
    /// passed to visitors are slots.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn point(&self, k: u32) -> Point {
        [self.xs[k as usize], self.ys[k as usize]]
    }

    /// Calls `visit(slot, d²)` for every stored point within `r` of `p`.
    pub fn for_each_within<F>(&self, p: Point, r: f64, mut visit: F)
    where
        F: FnMut(u32, f64),
    {
        let r2 = r * r;
        let n = self.n as isize;
        let reach = (r / self.cell).ceil() as isize;
        let l = self.region.side_m;
        let c = |x: f64| ((x / self.cell).floor().max(0.0) as isize).min(n - 1);
        let (cx, cy) = (c(p[0]), c(p[1]));

        // Small grids would visit a cell twice; fold per point instead.
        let exhaustive = self.region.wraparound && 2 * reach + 1 >= n;
        let range = |c0: isize| -> (isize, isize) {
            if exhaustive {
                (0, n - 1)
            } else if self.region.wraparound {
                (c0 - reach, c0 + reach)
            } else {
                ((c0 - reach).max(0), (c0 + reach).min(n - 1))
            }
        };
        let (x0, x1) = range(cx);
        let (y0, y1) = range(cy);
        let shift = |g: isize| {
            if g < 0 {
                -l
            } else if g >= n {
                l
            } else {
                0.0
            }
        };
        for gy in y0..=y1 {
            let row = gy.rem_euclid(n) as usize * self.n;
            let sy = shift(gy) - p[1];
            for gx in x0..=x1 {
                let cell = row + gx.rem_euclid(n) as usize;
                let sx = shift(gx) - p[0];
                let (a, b) = (self.start[cell] as usize, self.start[cell + 1] as usize);
                for k in a..b {
                    let d2 = if exhaustive {
                        self.region.dist2(p, [self.xs[k], self.ys[k]])
                    } else {
                        let dx = self.xs[k] + sx;
                        let dy = self.ys[k] + sy;
                        dx * dx + dy * dy
                    };
                    if d2 <= r2 {
                        visit(k as u32, d2);
                    }
                }
            }
        }
    }
}
