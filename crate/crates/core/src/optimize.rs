//! One-dimensional minimization: grid scan followed by golden-section refinement.

use crate::error::{PerfError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub argmin: f64,
    pub min: f64,
    /// Grid points where the objective failed to evaluate.
    pub skipped: Vec<f64>,
}

/// Evenly spaced grid with `n` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Golden-section search on `[a, b]` until the bracket is narrower than `tol`.
/// Failed evaluations count as `+∞`.
pub fn golden_section<F>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> Result<f64>,
{
    let eval = |x: f64| f(x).ok().filter(|v| v.is_finite()).unwrap_or(f64::INFINITY);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (eval(x1), eval(x2));
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = eval(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Scan `grid` (sorted ascending), then refine around the best point.
pub fn grid_then_golden<F>(f: F, grid: &[f64], tol: f64) -> Result<Minimum>
where
    F: Fn(f64) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(PerfError::InvalidInput("empty search grid".into()));
    }
    let mut skipped = Vec::new();
    let mut first_err = None;
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in grid.iter().enumerate() {
        match f(x) {
            Ok(v) if v.is_finite() => {
                if best.map_or(true, |(_, m)| v < m) {
                    best = Some((i, v));
                }
            }
            Ok(_) => skipped.push(x),
            Err(e) => {
                skipped.push(x);
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((i, v)) = best else {
        return Err(first_err.unwrap_or_else(|| PerfError::InvalidInput("objective is nowhere finite".into())));
    };
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    let (x, fx) = if hi > lo { golden_section(&f, lo, hi, tol) } else { (grid[i], v) };
    let (argmin, min) = if fx <= v { (x, fx) } else { (grid[i], v) };
    Ok(Minimum { argmin, min, skipped })
}
