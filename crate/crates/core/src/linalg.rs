//! Small dense helpers on top of faer.

use faer::linalg::solvers::Solve;
use faer::{Col, Mat, Side};

use crate::error::{PerfError, Result};

pub fn col(v: &[f64]) -> Col<f64> {
    Col::from_fn(v.len(), |i| v[i])
}

pub fn to_vec(c: &Col<f64>) -> Vec<f64> {
    (0..c.nrows()).map(|i| c[i]).collect()
}

pub fn mat_vec(a: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    let out = a * col(v);
    to_vec(&out)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Eigenvalues (ascending) and eigenvectors of a symmetric matrix.
pub fn sym_eig(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| PerfError::InvalidInput(format!("eigendecomposition failed: {e:?}")))?;
    let s = e.S();
    let vals: Vec<f64> = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((vals, e.U().to_owned()))
}

pub fn sym_eigvals(a: &Mat<f64>) -> Result<Vec<f64>> {
    let mut v = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| PerfError::InvalidInput(format!("eigendecomposition failed: {e:?}")))?;
    v.sort_by(|x, y| x.total_cmp(y));
    Ok(v)
}

pub fn max_asym(a: &Mat<f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    m
}

/// Solve a general square system, flagging numerically singular matrices.
pub fn lu_solve(a: &Mat<f64>, b: &Mat<f64>, what: &str) -> Result<Mat<f64>> {
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let n = a.nrows();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let x = u[(i, i)].abs();
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if !(lo > 1e-13 * hi) || !lo.is_finite() {
        return Err(PerfError::SingularSystem(format!("{what} is numerically singular")));
    }
    let x = lu.solve(b);
    if x.col_iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(PerfError::SingularSystem(format!("{what} produced non-finite solution")));
    }
    Ok(x)
}

pub fn identity(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
}
