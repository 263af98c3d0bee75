//! Population regime: infinite-sample RRM recursion, its fixed point and the
//! exact and approximate averaged risks of that fixed point.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, PerfError, Result};
use crate::linalg::{self, lu_solve, sym_eigvals};
use crate::model::{BlockCovariance, ModelSpec, PerformativeEffect, PD_FLOOR};
use crate::optimize::{grid_then_golden, linspace, Minimum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationRiskReport {
    pub lambda: f64,
    pub exact_risk: f64,
    pub first_order: f64,
    pub second_order: f64,
    pub f_opnorm_bound: f64,
    pub f_opnorm_exact: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalPopulation {
    pub lambda_star: f64,
    pub risk_star: f64,
}

/// Where [`numeric_optimal_lambda`] looks for the minimizer.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSearch {
    Grid(Vec<f64>),
    /// 100-point grid on `[lo, hi]`.
    Bracket(f64, f64),
}

/// Errors unless `Σ + λI` is positive definite.
pub fn check_shift_pd(cov: &BlockCovariance, lambda: f64) -> Result<()> {
    let lo = cov.min_eig() + lambda;
    if !(lo > PD_FLOOR * (cov.op_norm() + lambda.abs())) {
        return Err(PerfError::SingularSystem(format!(
            "Sigma + lambda*I is not positive definite (lambda = {lambda}, min eigenvalue {lo:e})"
        )));
    }
    Ok(())
}

fn shifted(cov: &BlockCovariance, lambda: f64) -> Mat<f64> {
    let mut s = cov.assemble();
    for i in 0..s.nrows() {
        s[(i, i)] += lambda;
    }
    s
}

/// `Σ + λI − ΣD`.
fn fixed_point_matrix(cov: &BlockCovariance, effect: &PerformativeEffect, lambda: f64) -> Mat<f64> {
    let sigma = cov.assemble();
    let dg = effect.diag();
    Mat::from_fn(sigma.nrows(), sigma.ncols(), |i, j| {
        sigma[(i, j)] * (1.0 - dg[j]) + if i == j { lambda } else { 0.0 }
    })
}

/// One population RRM step `(Σ+λI)⁻¹(Σθ* + ΣDθ_prev)`.
pub fn population_step(spec: &ModelSpec, lambda: f64, theta_prev: &[f64]) -> Result<Vec<f64>> {
    let cov = spec.cov();
    check_len(cov.p(), theta_prev.len())?;
    check_shift_pd(cov, lambda)?;
    let dt = spec.effect().apply(theta_prev);
    let target: Vec<f64> = spec.theta_star().iter().zip(&dt).map(|(a, b)| a + b).collect();
    let rhs = linalg::col(&cov.apply(&target));
    let llt = shifted(cov, lambda)
        .llt(faer::Side::Lower)
        .map_err(|_| PerfError::SingularSystem("Sigma + lambda*I factorization failed".into()))?;
    use faer::linalg::solvers::Solve;
    Ok(linalg::to_vec(&llt.solve(&rhs)))
}

/// Performative fixed point `θ^∞ = (Σ + λI − ΣD)⁻¹Σθ*`.
pub fn fixed_point(spec: &ModelSpec, lambda: f64) -> Result<Vec<f64>> {
    let cov = spec.cov();
    check_shift_pd(cov, lambda)?;
    let a = fixed_point_matrix(cov, spec.effect(), lambda);
    let rhs = linalg::col(&cov.apply(spec.theta_star()));
    let rhs = Mat::from_fn(rhs.nrows(), 1, |i, _| rhs[i]);
    let x = lu_solve(&a, &rhs, "I + lambda*Sigma^-1 - D")?;
    Ok((0..x.nrows()).map(|i| x[(i, 0)]).collect())
}

/// [`fixed_point`] for several `θ*` sharing one covariance and effect; the
/// system is factored once.
pub fn fixed_points(cov: &BlockCovariance, effect: &PerformativeEffect, lambda: f64, theta_stars: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_len(cov.d(), effect.d())?;
    check_shift_pd(cov, lambda)?;
    let p = cov.p();
    for t in theta_stars {
        check_len(p, t.len())?;
    }
    let a = fixed_point_matrix(cov, effect, lambda);
    let cols: Vec<Vec<f64>> = theta_stars.iter().map(|t| cov.apply(t)).collect();
    let rhs = Mat::from_fn(p, cols.len(), |i, j| cols[j][i]);
    let x = lu_solve(&a, &rhs, "I + lambda*Sigma^-1 - D")?;
    Ok((0..x.ncols()).map(|j| (0..p).map(|i| x[(i, j)]).collect()).collect())
}

/// Contraction factor `‖Σ‖/(‖Σ‖+λ) · max(‖b‖∞, ‖c‖∞)` of the recursion.
pub fn contraction_factor(cov: &BlockCovariance, effect: &PerformativeEffect, lambda: f64) -> f64 {
    let s = cov.op_norm();
    s / (s + lambda) * effect.max_abs()
}

/// Number of RRM steps after which the relative error is below `epsilon`.
pub fn iterations_to_tolerance(spec: &ModelSpec, lambda: f64, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(PerfError::InvalidInput(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    if spec.effect().is_zero() {
        return Ok(1);
    }
    let s = spec.cov().op_norm();
    if !(s + lambda > 0.0) {
        return Err(PerfError::InvalidInput(format!("lambda = {lambda} leaves no contraction")));
    }
    let q = contraction_factor(spec.cov(), spec.effect(), lambda);
    if !(q < 1.0) {
        return Err(PerfError::InvalidInput(format!("contraction factor {q} is not below 1")));
    }
    let ratio = (1.0 / epsilon).ln() / (1.0 / q).ln();
    Ok(((ratio - 1e-12).ceil() as usize).max(1))
}

/// Exact risk of the fixed point averaged over `θ* = (a, 0)`, `a ~ N(0, I_d/d)`.
pub fn exact_avg_risk(cov: &BlockCovariance, effect: &PerformativeEffect, lambda: f64) -> Result<f64> {
    check_len(cov.d(), effect.d())?;
    check_shift_pd(cov, lambda)?;
    let (d, p) = (cov.d(), cov.p());
    let sigma = cov.assemble();
    let a = fixed_point_matrix(cov, effect, lambda);
    let rhs = sigma.submatrix(0, 0, p, d).to_owned();
    let mut m = lu_solve(&a, &rhs, "I + lambda*Sigma^-1 - D")?;
    for j in 0..d {
        m[(j, j)] -= 1.0;
    }
    let sm = &sigma * &m;
    let mut s = 0.0;
    for j in 0..d {
        for i in 0..p {
            s += m[(i, j)] * sm[(i, j)];
        }
    }
    Ok((s / d as f64).max(0.0))
}

fn trace_diag_sigma1(cov: &BlockCovariance, w: impl Fn(usize) -> f64) -> f64 {
    let s1 = cov.sigma1();
    (0..cov.d()).map(|i| w(i) * s1[(i, i)]).sum()
}

fn trace_of(m: &Mat<f64>) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// First-order risk `(1/d)Tr[diag(b²)Σ₁] − 2λb̄ + (λ²/d)Tr S₁`.
pub fn risk_first_order(cov: &BlockCovariance, effect: &PerformativeEffect, lambda: f64) -> Result<f64> {
    check_len(cov.d(), effect.d())?;
    let d = cov.d() as f64;
    let b = effect.b();
    let tr_s1 = trace_of(&cov.schur_predictive()?.s1);
    let lead = trace_diag_sigma1(cov, |i| b[i] * b[i]) / d;
    Ok(lead - 2.0 * lambda * effect.b_bar() + lambda * lambda * tr_s1 / d)
}

/// Coefficients `[c₀, c₁, c₂, c₃]` of the second-order risk as a cubic in λ.
pub fn second_order_coefficients(cov: &BlockCovariance, effect: &PerformativeEffect) -> Result<[f64; 4]> {
    check_len(cov.d(), effect.d())?;
    let n = cov.d();
    let d = n as f64;
    let (b, c) = (effect.b(), effect.c());
    let schur = cov.schur_predictive()?;
    let (s1, s21) = (&schur.s1, &schur.s21);
    let sig1 = cov.sigma1();
    let sig12 = cov.sigma12();
    let tr_s1 = trace_of(s1);
    let tr_b_s1: f64 = (0..n).map(|i| b[i] * s1[(i, i)]).sum();
    let tr_inv2 = cov.spectrum()?.block1_trace(|x| 1.0 / (x * x));
    let mut tr_bsbs = 0.0;
    let mut tr_cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            tr_bsbs += b[i] * sig1[(i, j)] * b[j] * s1[(j, i)];
            tr_cross += b[i] * sig12[(i, j)] * c[j] * s21[(j, i)];
        }
    }
    let sum_b: f64 = b.iter().sum();
    let sum_b2: f64 = b.iter().map(|x| x * x).sum();
    let c3 = -2.0 * tr_inv2 / d;
    let c2 = (tr_s1 + 6.0 * tr_b_s1) / d;
    let c1 = -(2.0 * tr_bsbs + 2.0 * tr_cross + 2.0 * sum_b + 4.0 * sum_b2) / d;
    let c0 = (trace_diag_sigma1(cov, |i| b[i] * b[i]) + 2.0 * trace_diag_sigma1(cov, |i| b[i].powi(3))) / d;
    Ok([c0, c1, c2, c3])
}

/// Second-order risk expansion (cubic in λ, includes the `c` cross term).
pub fn risk_second_order(cov: &BlockCovariance, effect: &PerformativeEffect, lambda: f64) -> Result<f64> {
    let [c0, c1, c2, c3] = second_order_coefficients(cov, effect)?;
    Ok(c0 + lambda * (c1 + lambda * (c2 + lambda * c3)))
}

/// Local minimizer of the second-order cubic: the smaller root of its derivative.
pub fn second_order_minimizer(cov: &BlockCovariance, effect: &PerformativeEffect) -> Result<f64> {
    let [_, c1, c2, c3] = second_order_coefficients(cov, effect)?;
    let (qa, qb, qc) = (3.0 * c3, 2.0 * c2, c1);
    let disc = qb * qb - 4.0 * qa * qc;
    if !(disc >= 0.0) || qa == 0.0 {
        return Err(PerfError::InvalidInput(
            "second-order risk has no local minimum (derivative has no real root)".into(),
        ));
    }
    // Numerically stable roots of qa·x² + qb·x + qc.
    let q = -0.5 * (qb + qb.signum() * disc.sqrt());
    let r1 = q / qa;
    let r2 = if q != 0.0 { qc / q } else { r1 };
    // With qa < 0 the cubic has its local minimum at the smaller critical point.
    Ok(r1.min(r2))
}

/// Upper bound on `‖D − λΣ⁻¹‖_op` from Weyl's inequalities.
pub fn f_opnorm_bound(cov: &BlockCovariance, effect: &PerformativeEffect, lambda: f64) -> f64 {
    let entries = effect.b().iter().chain(effect.c());
    let hi = entries.clone().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lo = entries.fold(f64::INFINITY, |m, &x| m.min(x));
    (hi - lambda / cov.op_norm()).abs().max((lo - lambda / cov.min_eig()).abs())
}

/// Exact `‖D − λΣ⁻¹‖_op` (dense eigendecomposition).
pub fn f_opnorm_exact(cov: &BlockCovariance, effect: &PerformativeEffect, lambda: f64) -> Result<f64> {
    let p = cov.p();
    let inv = lu_solve(&cov.assemble(), &linalg::identity(p), "Sigma")?;
    let dg = effect.diag();
    let f = Mat::from_fn(p, p, |i, j| {
        let v = -lambda * 0.5 * (inv[(i, j)] + inv[(j, i)]);
        if i == j { v + dg[i] } else { v }
    });
    let ev = sym_eigvals(&f)?;
    Ok(ev[0].abs().max(ev[p - 1].abs()))
}

/// Closed-form minimizer of the first-order risk and its value.
pub fn optimal_population(cov: &BlockCovariance, effect: &PerformativeEffect) -> Result<OptimalPopulation> {
    check_len(cov.d(), effect.d())?;
    let d = cov.d() as f64;
    let tr_s1 = trace_of(&cov.schur_predictive()?.s1);
    if !(tr_s1 > 0.0) {
        return Err(PerfError::SingularBlock(format!("Tr S1 = {tr_s1} is not positive")));
    }
    let bb = effect.b_bar();
    let b = effect.b();
    Ok(OptimalPopulation {
        lambda_star: bb * d / tr_s1,
        risk_star: trace_diag_sigma1(cov, |i| b[i] * b[i]) / d - bb * bb * d / tr_s1,
    })
}

/// Minimize [`exact_avg_risk`] over λ. Points where the fixed point degenerates
/// are reported in `skipped`.
pub fn numeric_optimal_lambda(cov: &BlockCovariance, effect: &PerformativeEffect, search: &LambdaSearch) -> Result<Minimum> {
    let grid = match search {
        LambdaSearch::Grid(g) => {
            let mut g = g.clone();
            g.sort_by(|a, b| a.total_cmp(b));
            g
        }
        LambdaSearch::Bracket(lo, hi) => linspace(*lo, *hi, 100),
    };
    grid_then_golden(|l| exact_avg_risk(cov, effect, l), &grid, 1e-8)
}

pub fn population_report(cov: &BlockCovariance, effect: &PerformativeEffect, lambda: f64) -> Result<PopulationRiskReport> {
    Ok(PopulationRiskReport {
        lambda,
        exact_risk: exact_avg_risk(cov, effect, lambda)?,
        first_order: risk_first_order(cov, effect, lambda)?,
        second_order: risk_second_order(cov, effect, lambda)?,
        f_opnorm_bound: f_opnorm_bound(cov, effect, lambda),
        f_opnorm_exact: f_opnorm_exact(cov, effect, lambda)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec_const(d: usize, rho: f64, b: f64, c: f64, theta: Vec<f64>) -> ModelSpec {
        let cov = BlockCovariance::isotropic_rho(d, rho).unwrap();
        ModelSpec::new(cov, PerformativeEffect::constant(d, b, c).unwrap(), 0.1, theta).unwrap()
    }

    #[test]
    fn step_examples() {
        let theta = vec![0.5, -1.0, 0.0, 0.0];
        let s = spec_const(2, 0.0, 0.0, 0.0, theta.clone());
        assert_eq!(population_step(&s, 0.0, &[3.0, 1.0, 2.0, 0.0]).unwrap(), theta);
        let s = spec_const(2, 0.0, 0.2, 0.0, theta.clone());
        let out = population_step(&s, 0.0, &theta).unwrap();
        assert_abs_diff_eq!(out[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], -1.2, epsilon = 1e-15);
        assert!(matches!(population_step(&s, -2.0, &theta), Err(PerfError::SingularSystem(_))));
    }

    #[test]
    fn fixed_point_examples() {
        let s = spec_const(1, 0.0, 0.2, 0.0, vec![1.0, 0.0]);
        let fp = fixed_point(&s, 0.0).unwrap();
        assert_abs_diff_eq!(fp[0], 1.25, epsilon = 1e-14);
        assert_abs_diff_eq!(fp[1], 0.0, epsilon = 1e-14);
        let s = spec_const(3, 0.0, 0.3, 0.1, vec![0.2, 0.4, -0.3, 0.0, 0.0, 0.0]);
        let fp = fixed_point(&s, 0.3).unwrap();
        for (a, b) in fp.iter().zip(s.theta_star()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn batched_fixed_points_match_single() {
        let cov = BlockCovariance::isotropic_rho(3, 0.4).unwrap();
        let e = PerformativeEffect::new(vec![0.1, -0.2, 0.3], vec![0.05, 0.0, -0.1]).unwrap();
        let thetas = vec![vec![1.0, -0.5, 0.2, 0.0, 0.0, 0.0], vec![-0.4, 0.3, 0.9, 0.0, 0.0, 0.0]];
        let batch = fixed_points(&cov, &e, 0.25, &thetas).unwrap();
        for (t, got) in thetas.iter().zip(&batch) {
            let s = ModelSpec::new(cov.clone(), e.clone(), 0.0, t.clone()).unwrap();
            for (a, b) in got.iter().zip(fixed_point(&s, 0.25).unwrap()) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
            }
        }
        assert!(fixed_points(&cov, &e, 0.25, &[vec![1.0; 4]]).is_err());
    }

    #[test]
    fn iteration_counts() {
        let s = spec_const(2, 0.0, 0.5, 0.0, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(iterations_to_tolerance(&s, 0.0, 1e-3).unwrap(), 10);
        assert_eq!(iterations_to_tolerance(&s, 0.0, 0.5).unwrap(), 1);
        let z = spec_const(2, 0.0, 0.0, 0.0, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(iterations_to_tolerance(&z, 0.0, 1e-3).unwrap(), 1);
        assert!(iterations_to_tolerance(&s, 0.0, 1.5).is_err());
    }

    #[test]
    fn exact_risk_scalar_oracle() {
        let cov = BlockCovariance::identity(5);
        for &b in &[-0.1, 0.0, 0.2] {
            let e = PerformativeEffect::constant(5, b, 0.0).unwrap();
            for &l in &[-0.3, 0.0, 0.1, 0.5, 2.0] {
                let want = ((b - l) / (1.0 + l - b)).powi(2);
                assert_abs_diff_eq!(exact_avg_risk(&cov, &e, l).unwrap(), want, epsilon = 1e-14);
            }
        }
        let e = PerformativeEffect::constant(5, 0.2, 0.0).unwrap();
        assert_abs_diff_eq!(exact_avg_risk(&cov, &e, 0.2).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn first_order_examples() {
        let cov = BlockCovariance::identity(3);
        let e = PerformativeEffect::new(vec![0.1, 0.2, 0.4], vec![0.0; 3]).unwrap();
        assert_abs_diff_eq!(risk_first_order(&cov, &e, 0.0).unwrap(), (0.01 + 0.04 + 0.16) / 3.0, epsilon = 1e-15);
        let e = PerformativeEffect::constant(3, 0.2, 0.0).unwrap();
        assert_abs_diff_eq!(risk_first_order(&cov, &e, 0.2).unwrap(), 0.0, epsilon = 1e-15);
        assert_eq!(risk_first_order(&cov, &PerformativeEffect::zero(3), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn second_order_scalar_reduction() {
        // Σ = I, constant b, c = 0: per-coordinate x² + 2x³ with x = b − λ.
        let cov = BlockCovariance::identity(4);
        let e = PerformativeEffect::constant(4, 0.15, 0.0).unwrap();
        for &l in &[-0.2, 0.0, 0.1, 0.3] {
            let x: f64 = 0.15 - l;
            assert_abs_diff_eq!(risk_second_order(&cov, &e, l).unwrap(), x * x + 2.0 * x.powi(3), epsilon = 1e-14);
        }
        let with_c = PerformativeEffect::constant(4, 0.15, -0.4).unwrap();
        assert_eq!(risk_second_order(&cov, &e, 0.2).unwrap(), risk_second_order(&cov, &with_c, 0.2).unwrap());
        assert_eq!(risk_second_order(&cov, &PerformativeEffect::zero(4), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn f_bound_examples() {
        let cov = BlockCovariance::identity(2);
        let e = PerformativeEffect::new(vec![0.0, 0.4], vec![0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(f_opnorm_bound(&cov, &e, 0.2), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(f_opnorm_exact(&cov, &e, 0.2).unwrap(), 0.2, epsilon = 1e-14);
        let e = PerformativeEffect::new(vec![-0.3, 0.1], vec![0.2, 0.0]).unwrap();
        assert_abs_diff_eq!(f_opnorm_bound(&cov, &e, 0.0), 0.3);
    }

    #[test]
    fn optimum_identity() {
        let cov = BlockCovariance::identity(4);
        let e = PerformativeEffect::new(vec![0.1, 0.3, 0.2, 0.2], vec![0.0; 4]).unwrap();
        let o = optimal_population(&cov, &e).unwrap();
        assert_abs_diff_eq!(o.lambda_star, 0.2, epsilon = 1e-15);
        // Empirical (divide-by-d) variance of b.
        assert_abs_diff_eq!(o.risk_star, 0.02 / 4.0, epsilon = 1e-15);
        let z = optimal_population(&cov, &PerformativeEffect::zero(4)).unwrap();
        assert_eq!((z.lambda_star, z.risk_star), (0.0, 0.0));
    }

    #[test]
    fn numeric_optimum_identity() {
        let cov = BlockCovariance::identity(5);
        let e = PerformativeEffect::constant(5, 0.2, 0.0).unwrap();
        let m = numeric_optimal_lambda(&cov, &e, &LambdaSearch::Bracket(-0.5, 1.0)).unwrap();
        assert!((m.argmin - 0.2).abs() < 1e-6);
        assert!(m.min < 1e-12);
        let m = numeric_optimal_lambda(&cov, &PerformativeEffect::zero(5), &LambdaSearch::Bracket(-0.5, 1.0)).unwrap();
        assert!(m.argmin.abs() < 1e-6);
        let m = numeric_optimal_lambda(&cov, &e, &LambdaSearch::Bracket(-2.0, 1.0)).unwrap();
        assert!(!m.skipped.is_empty());
        assert!((m.argmin - 0.2).abs() < 1e-6);
    }

    #[test]
    fn second_order_minimizer_identity() {
        let cov = BlockCovariance::identity(3);
        let e = PerformativeEffect::constant(3, 0.2, 0.0).unwrap();
        assert_abs_diff_eq!(second_order_minimizer(&cov, &e).unwrap(), 0.2, epsilon = 1e-12);
    }
}
