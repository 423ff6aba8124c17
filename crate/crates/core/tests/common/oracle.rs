//! Exhaustive grid minimizers used as reference values for the proximal
//! operators and the small solver instances.
//!
//! Everything here works on integer grid indices so that grid points are
//! exact multiples of the step.

#![allow(dead_code)]

/// Minimum of `f` over `{-half, ..., half}^n / scale` (for instance `half =
/// 500`, `scale = 100` is the 0.01 grid on `[-5, 5]^n`).
///
/// Branch and bound: `lower(lo, hi)` must bound `f` from below on the box
/// `[lo, hi]`. The result is the exact grid minimum.
pub fn grid_min_bb<F, G>(n: usize, half: i64, scale: f64, value: F, lower: G) -> f64
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &[f64]) -> f64,
{
    let coord = |i: i64| i as f64 / scale;
    let mut best = f64::INFINITY;
    let mut stack = vec![(vec![-half; n], vec![half; n])];
    let mut point = vec![0.0; n];
    let mut lo_x = vec![0.0; n];
    let mut hi_x = vec![0.0; n];
    while let Some((lo, hi)) = stack.pop() {
        for d in 0..n {
            lo_x[d] = coord(lo[d]);
            hi_x[d] = coord(hi[d]);
        }
        if lo == hi {
            best = best.min(value(&lo_x));
            continue;
        }
        if lower(&lo_x, &hi_x) >= best {
            continue;
        }
        for d in 0..n {
            point[d] = coord(lo[d] + (hi[d] - lo[d]) / 2);
        }
        best = best.min(value(&point));
        let d = (0..n).max_by_key(|&d| hi[d] - lo[d]).unwrap();
        let mid = lo[d] + (hi[d] - lo[d]) / 2;
        let (mut left_hi, mut right_lo) = (hi.clone(), lo.clone());
        left_hi[d] = mid;
        right_lo[d] = mid + 1;
        stack.push((right_lo, hi));
        stack.push((lo, left_hi));
    }
    best
}

/// Minimum over the 1-D grid `{-half..half} / scale` of `f`, by enumeration.
pub fn grid_min_1d(half: i64, scale: f64, f: impl Fn(f64) -> f64) -> f64 {
    (-half..=half)
        .map(|i| f(i as f64 / scale))
        .fold(f64::INFINITY, f64::min)
}

/// `min ||x - v||^2 / 2` over the box.
pub fn box_min_half_sq_dist(lo: &[f64], hi: &[f64], v: &[f64]) -> f64 {
    v.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| {
            let d = v - v.clamp(l, h);
            0.5 * d * d
        })
        .sum()
}

/// `min |x_i|` over an interval.
pub fn interval_min_abs(lo: f64, hi: f64) -> f64 {
    0f64.clamp(lo, hi).abs()
}

/// `min ||x_S||_2` over the box, restricted to the coordinates in `subset`.
pub fn box_min_norm(lo: &[f64], hi: &[f64], subset: &[usize]) -> f64 {
    subset
        .iter()
        .map(|&i| interval_min_abs(lo[i], hi[i]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Minimum of `f` over simplex grid points `k / steps` with nonnegative
/// integers `k` summing to `steps`, and the minimizing point.
pub fn simplex_grid_min(q: usize, steps: usize, f: impl Fn(&[f64]) -> f64) -> (f64, Vec<f64>) {
    fn rec(
        pos: usize,
        remaining: usize,
        steps: usize,
        point: &mut Vec<f64>,
        f: &dyn Fn(&[f64]) -> f64,
        best: &mut (f64, Vec<f64>),
    ) {
        let q = point.len();
        if pos == q - 1 {
            point[pos] = remaining as f64 / steps as f64;
            let v = f(point);
            if v < best.0 {
                *best = (v, point.clone());
            }
            return;
        }
        for k in 0..=remaining {
            point[pos] = k as f64 / steps as f64;
            rec(pos + 1, remaining - k, steps, point, f, best);
        }
    }
    let mut best = (f64::INFINITY, vec![0.0; q]);
    let mut point = vec![0.0; q];
    rec(0, steps, steps, &mut point, &f, &mut best);
    best
}

/// Minimum over `{0, 1/steps, ..., 1}^q` of a convex `f`.
///
/// The first `q - 1` coordinates are enumerated; along the last one the grid
/// restriction of a convex function is a convex sequence, so its minimum is
/// found by bisection on forward differences.
pub fn unit_box_grid_min_convex(q: usize, steps: usize, f: impl Fn(&[f64]) -> f64) -> (f64, Vec<f64>) {
    let s = steps as f64;
    let mut best = (f64::INFINITY, vec![0.0; q]);
    let mut point = vec![0.0; q];
    let outer = (steps + 1).pow(q as u32 - 1);
    for flat in 0..outer {
        let mut rest = flat;
        for d in 0..q - 1 {
            point[d] = (rest % (steps + 1)) as f64 / s;
            rest /= steps + 1;
        }
        let at = |k: usize, p: &mut Vec<f64>| {
            p[q - 1] = k as f64 / s;
            f(p)
        };
        // first k whose forward difference is nonnegative
        let (mut lo, mut hi) = (0usize, steps);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if at(mid + 1, &mut point) - at(mid, &mut point) >= 0.0 {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let v = at(lo, &mut point);
        if v < best.0 {
            best = (v, point.clone());
        }
    }
    best
}
