//! Over-parameterized regime (`p/n = κ > 1`, per-p normalization): the τ fixed
//! point, deterministic equivalents of the RRM risk, and the closed forms and
//! expansion coefficients for the isotropic-ρ covariance.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, PerfError, Result};
use crate::linalg::dot;
use crate::model::{BlockCovariance, PerformativeEffect, Spectrum};
use crate::optimize::{grid_then_golden, linspace, Minimum};

pub const TAU_LO: f64 = 1e-12;
pub const TAU_HI: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSolution {
    pub tau: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub residual: f64,
    pub iterations: usize,
}

fn check_regime(kappa: f64, lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(PerfError::InvalidInput(format!(
            "lambda = {lambda}: the deterministic equivalent needs lambda > 0"
        )));
    }
    if !(kappa > 1.0) || !kappa.is_finite() {
        return Err(PerfError::InvalidInput(format!("kappa = {kappa} must exceed 1")));
    }
    Ok(())
}

/// `g(τ) = 1/κ − λ/τ − (1/p)Tr[(Σ+τI)⁻¹Σ]` and its derivative.
fn tau_equation(eigs: &[(f64, usize)], p: f64, kappa: f64, lambda: f64, tau: f64) -> (f64, f64) {
    let (mut tr, mut dtr) = (0.0, 0.0);
    for &(mu, m) in eigs {
        let r = 1.0 / (mu + tau);
        tr += m as f64 * mu * r;
        dtr += m as f64 * mu * r * r;
    }
    (1.0 / kappa - lambda / tau - tr / p, lambda / (tau * tau) + dtr / p)
}

/// Solve for τ: log-space bisection on `[1e-12, 1e12]`, then safeguarded Newton.
pub fn solve_tau_spectrum(spec: &Spectrum, kappa: f64, lambda: f64) -> Result<TauSolution> {
    check_regime(kappa, lambda)?;
    let eigs = spec.eigenvalues();
    let p = spec.p() as f64;
    let g = |t: f64| tau_equation(&eigs, p, kappa, lambda, t);
    let (mut lo, mut hi) = (TAU_LO, TAU_HI);
    if !(g(lo).0 < 0.0 && g(hi).0 > 0.0) {
        return Err(PerfError::NoBracket { lo, hi });
    }
    let mut iterations = 0;
    while hi / lo - 1.0 > 1e-8 {
        let mid = (lo * hi).sqrt();
        if g(mid).0 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let mut tau = (lo * hi).sqrt();
    let (mut val, mut der) = g(tau);
    for _ in 0..100 {
        if val.abs() <= 1e-12 {
            break;
        }
        if val < 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        let mut next = tau - val / der;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == tau {
            break;
        }
        tau = next;
        (val, der) = g(tau);
        iterations += 1;
    }
    Ok(TauSolution { tau, lambda, kappa, residual: val.abs(), iterations })
}

pub fn solve_tau(cov: &BlockCovariance, kappa: f64, lambda: f64) -> Result<TauSolution> {
    solve_tau_spectrum(&cov.spectrum()?, kappa, lambda)
}

/// Deterministic-equivalent machinery for one `(Σ, D, λ, κ, σ)`; τ and the
/// shared traces are computed once.
#[derive(Debug, Clone)]
pub struct Equivalent {
    spec: Spectrum,
    diag: Vec<f64>,
    kappa: f64,
    sigma: f64,
    tau: TauSolution,
    t2: f64,
    den: f64,
}

impl Equivalent {
    pub fn new(spec: Spectrum, effect: &PerformativeEffect, lambda: f64, kappa: f64, noise_std: f64) -> Result<Self> {
        check_len(spec.d(), effect.d())?;
        if !(noise_std >= 0.0) {
            return Err(PerfError::InvalidInput(format!("noise_std = {noise_std} must be >= 0")));
        }
        let tau = solve_tau_spectrum(&spec, kappa, lambda)?;
        let t = tau.tau;
        let t2 = spec.trace(|x| (x / (x + t)).powi(2));
        let den = spec.p() as f64 - kappa * t2;
        if !(den > 1e-12 * spec.p() as f64) {
            return Err(PerfError::DegenerateDenominator(den));
        }
        Ok(Self { spec, diag: effect.diag(), kappa, sigma: noise_std, tau, t2, den })
    }

    pub fn from_cov(cov: &BlockCovariance, effect: &PerformativeEffect, lambda: f64, kappa: f64, noise_std: f64) -> Result<Self> {
        Self::new(cov.spectrum()?, effect, lambda, kappa, noise_std)
    }

    pub fn tau(&self) -> &TauSolution {
        &self.tau
    }

    /// `Tr[Σ²(Σ+τI)⁻²]`.
    pub fn t2(&self) -> f64 {
        self.t2
    }

    /// `p − κ Tr[Σ²(Σ+τI)⁻²]`.
    pub fn denominator(&self) -> f64 {
        self.den
    }

    fn d_apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.diag).map(|(a, b)| a * b).collect()
    }

    fn check_vec(&self, v: &[f64]) -> Result<()> {
        check_len(self.spec.p(), v.len())
    }

    /// `‖v‖²_Σ`.
    fn sigma_norm2(&self, v: &[f64]) -> f64 {
        dot(v, &self.spec.apply(|x| x, v))
    }

    /// `‖(Σ+τI)⁻¹ v‖²_Σ`.
    fn resolvent_norm2(&self, v: &[f64]) -> f64 {
        let t = self.tau.tau;
        dot(v, &self.spec.apply(|x| x / ((x + t) * (x + t)), v))
    }

    /// First-order (in `D`) equivalent of the risk of `θ₂`.
    pub fn r_eq(&self, theta_star: &[f64]) -> Result<f64> {
        self.check_vec(theta_star)?;
        let t = self.tau.tau;
        let u = self.spec.apply(|x| x / (x + t), theta_star);
        let du = self.d_apply(&u);
        let q0 = self.resolvent_norm2(theta_star);
        let q1 = dot(&self.spec.apply(|x| (x / (x + t)).powi(2), theta_star), &du);
        let q2 = dot(&self.spec.apply(|x| x / ((x + t) * (x + t)), theta_star), &du);
        let k = self.kappa;
        let noise = self.sigma * self.sigma + t * t * (q0 + 2.0 * q2);
        Ok(t * t * q0 - 2.0 * t * q1 + k * self.t2 * noise / self.den)
    }

    /// Equivalent of the risk after one step trained on `θ* + Dθ₀`.
    pub fn r_eq_one_step(&self, theta0: &[f64], theta_star: &[f64]) -> Result<f64> {
        self.check_vec(theta0)?;
        self.check_vec(theta_star)?;
        let t = self.tau.tau;
        let tp: Vec<f64> = theta_star.iter().zip(self.d_apply(theta0)).map(|(a, b)| a + b).collect();
        let fit: Vec<f64> = self.spec.apply(|x| x / (x + t), &tp).iter().zip(theta_star).map(|(a, b)| a - b).collect();
        let s0 = self.sigma * self.sigma + t * t * self.resolvent_norm2(&tp);
        Ok(self.sigma_norm2(&fit) + self.kappa * self.t2 * s0 / self.den)
    }

    /// `(γ⁽¹⁾)² = κ(σ² + τ²‖(Σ+τI)⁻¹θp‖²_Σ)/(1 − Tr[Σ²(Σ+τI)⁻²]/n)` for `θp = θ* + Dθ₀`.
    pub fn gamma1_sq(&self, theta0: &[f64], theta_star: &[f64]) -> Result<f64> {
        self.check_vec(theta0)?;
        self.check_vec(theta_star)?;
        let t = self.tau.tau;
        let tp: Vec<f64> = theta_star.iter().zip(self.d_apply(theta0)).map(|(a, b)| a + b).collect();
        let s0 = self.sigma * self.sigma + t * t * self.resolvent_norm2(&tp);
        let p = self.spec.p() as f64;
        Ok(self.kappa * s0 / (1.0 - self.kappa * self.t2 / p))
    }

    /// Equivalent of the risk after two steps from `θ₀` (exact in `D`).
    pub fn r_eq_two_step(&self, theta0: &[f64], theta_star: &[f64]) -> Result<f64> {
        self.check_vec(theta0)?;
        self.check_vec(theta_star)?;
        let t = self.tau.tau;
        let k = self.kappa;
        let tp: Vec<f64> = theta_star.iter().zip(self.d_apply(theta0)).map(|(a, b)| a + b).collect();
        let w = self.spec.apply(|x| x / (x + t), &tp);
        let dw = self.d_apply(&w);
        let rt = self.spec.apply(|x| 1.0 / (x + t), theta_star);
        let z: Vec<f64> = self.spec.apply(|x| x / (x + t), &dw).iter().zip(&rt).map(|(a, b)| a - t * b).collect();
        let y: Vec<f64> = theta_star.iter().zip(&dw).map(|(a, b)| a + b).collect();
        let q3 = self.spec.trace_fdgd(|x| x / ((x + t) * (x + t)), &self.diag, |x| x.powi(3) / ((x + t) * (x + t)));
        let q1 = self.spec.trace_fdgd(|x| x / ((x + t) * (x + t)), &self.diag, |x| x / ((x + t) * (x + t)));
        let s2 = self.sigma * self.sigma;
        let s0 = s2 + t * t * self.resolvent_norm2(&tp);
        let s1 = s2 + t * t * self.resolvent_norm2(&y);
        let den = self.den;
        Ok(self.sigma_norm2(&z)
            + k * q3 * s0 / den
            + k * self.t2 * s1 / den
            + k * k * t * t * self.t2 * q1 * s0 / (den * den))
    }

    /// `r_eq` averaged over `θ* = (a, 0)` with `a ~ N(0, I_d/d)`.
    pub fn expected_r_eq(&self) -> f64 {
        let t = self.tau.tau;
        let d = self.spec.d() as f64;
        let k = self.kappa;
        let e1 = self.spec.block1_trace(|x| x / ((x + t) * (x + t))) / d;
        let tb = self.spec.block1_trace_fdg(|x| (x / (x + t)).powi(2), &self.diag, |x| x / (x + t)) / d;
        let tc = self.spec.block1_trace_fdg(|x| x / ((x + t) * (x + t)), &self.diag, |x| x / (x + t)) / d;
        let s2 = self.sigma * self.sigma;
        t * t * e1 + k * self.t2 * (s2 + t * t * e1) / self.den - 2.0 * t * tb
            + 2.0 * k * t * t * self.t2 * tc / self.den
    }
}

pub fn r_eq(cov: &BlockCovariance, effect: &PerformativeEffect, lambda: f64, kappa: f64, noise_std: f64, theta_star: &[f64]) -> Result<f64> {
    Equivalent::from_cov(cov, effect, lambda, kappa, noise_std)?.r_eq(theta_star)
}

pub fn r_eq_one_step(
    cov: &BlockCovariance,
    effect: &PerformativeEffect,
    lambda: f64,
    kappa: f64,
    noise_std: f64,
    theta0: &[f64],
    theta_star: &[f64],
) -> Result<f64> {
    Equivalent::from_cov(cov, effect, lambda, kappa, noise_std)?.r_eq_one_step(theta0, theta_star)
}

pub fn r_eq_two_step(
    cov: &BlockCovariance,
    effect: &PerformativeEffect,
    lambda: f64,
    kappa: f64,
    noise_std: f64,
    theta0: &[f64],
    theta_star: &[f64],
) -> Result<f64> {
    Equivalent::from_cov(cov, effect, lambda, kappa, noise_std)?.r_eq_two_step(theta0, theta_star)
}

pub fn expected_r_eq(cov: &BlockCovariance, effect: &PerformativeEffect, lambda: f64, kappa: f64, noise_std: f64) -> Result<f64> {
    Ok(Equivalent::from_cov(cov, effect, lambda, kappa, noise_std)?.expected_r_eq())
}

/// `R₀` as a function of τ (through order ρ²).
pub fn r0_of_tau(tau: f64, rho: f64, kappa: f64, sigma: f64) -> f64 {
    let s = 1.0 + tau;
    let s2 = s * s;
    let g = s2 - kappa;
    let sig2 = sigma * sigma;
    let base = tau * tau / s2;
    let lead = base + kappa / g * (sig2 + base);
    let x = tau * tau * (1.0 - 2.0 * tau) / (s2 * s2)
        + kappa * tau * tau * (1.0 - 2.0 * tau) / (s2 * s2 * g)
        + kappa * tau * (tau - 2.0) / (g * g) * (sig2 + base);
    lead + rho * rho * x
}

pub fn a1_of_tau(tau: f64, kappa: f64) -> f64 {
    let s = 1.0 + tau;
    let s3 = s * s * s;
    -2.0 * tau / s3 + 2.0 * kappa * tau * tau / (s3 * (s * s - kappa))
}

pub fn a2_of_tau(tau: f64, kappa: f64) -> f64 {
    let s = 1.0 + tau;
    let t3 = tau.powi(3);
    -4.0 * t3 / s.powi(5) + 2.0 * kappa * t3 * (tau * tau - 1.0) / (s.powi(6) * (s * s - kappa))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub r_tilde: f64,
    pub r0: f64,
    pub a1: f64,
    pub a2: f64,
    pub tau: f64,
}

/// `R̃ = R₀ + b̄A₁ + c̄ρ²A₂` with τ solved on the isotropic-ρ covariance.
pub fn closed_form_isotropic(rho: f64, effect: &PerformativeEffect, lambda: f64, kappa: f64, sigma: f64) -> Result<ClosedForm> {
    let cov = BlockCovariance::isotropic_rho(effect.d(), rho)?;
    let tau = solve_tau(&cov, kappa, lambda)?.tau;
    let (r0, a1, a2) = (r0_of_tau(tau, rho, kappa, sigma), a1_of_tau(tau, kappa), a2_of_tau(tau, kappa));
    Ok(ClosedForm { r_tilde: r0 + effect.b_bar() * a1 + effect.c_bar() * rho * rho * a2, r0, a1, a2, tau })
}

/// Minimizer of `R₀(·, ρ=0)` in τ.
pub fn tau0(kappa: f64, sigma: f64) -> f64 {
    let q = 1.0 + kappa + kappa * sigma * sigma;
    (q + (q * q - 4.0 * kappa).sqrt()) / 2.0 - 1.0
}

fn n_b1(s: f64, kappa: f64) -> f64 {
    2.0 * s.powi(4) - 3.0 * (kappa + 1.0) * s.powi(3) + 4.0 * kappa * s * s + kappa * (kappa + 1.0) * s - 2.0 * kappa * kappa
}

fn n_c1(t: f64, kappa: f64) -> f64 {
    4.0 * t.powi(4) + (6.0 - 3.0 * kappa) * t.powi(3) - (6.0 + 3.0 * kappa) * t * t + (kappa * kappa + 9.0 * kappa - 14.0) * t
        - 3.0 * kappa * kappa
        + 9.0 * kappa
        - 6.0
}

/// First-order coefficient of `λ*_eq` in `b̄`.
pub fn b1_coefficient(kappa: f64, sigma: f64) -> f64 {
    let s = 1.0 + tau0(kappa, sigma);
    -n_b1(s, kappa) / (kappa * s.powi(4))
}

/// Expansion coefficients of the optimal regularization and risk; first order in
/// `(b̄, c̄)`, second order in ρ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Coefficients {
    pub kappa: f64,
    pub sigma: f64,
    pub rho: f64,
    pub tau0: f64,
    pub b1: f64,
    pub c1: f64,
    pub b2: f64,
    pub c2: f64,
    pub b3: f64,
    pub c3: f64,
    /// `τ*₀(ρ)` through order ρ².
    pub tau0_star: f64,
    /// `λ*_{eq,D=0}(ρ)` through order ρ².
    pub lambda_eq_d0: f64,
    /// `R*_eq(ρ)` through order ρ².
    pub risk_eq_star: f64,
}

pub fn theorem3_coefficients(kappa: f64, sigma: f64, rho: f64) -> Result<Theorem3Coefficients> {
    if !(kappa > 1.0) || !(sigma >= 0.0) || !(rho.abs() < 1.0) {
        return Err(PerfError::InvalidInput(format!(
            "need kappa > 1, sigma >= 0, |rho| < 1 (got {kappa}, {sigma}, {rho})"
        )));
    }
    let t = tau0(kappa, sigma);
    let s = 1.0 + t;
    let g = s * s - kappa;
    let r2 = rho * rho;
    let nb = n_b1(s, kappa);
    let nc = n_c1(t, kappa);
    let shift = kappa * t * t / (s * g);
    let lambda_eq_d0 = t * (1.0 / kappa - 1.0 / s)
        + r2 * (t * (1.0 / (s * s) - 1.0 / s.powi(3)) - (1.0 / kappa - 1.0 / (s * s)) * shift);
    Ok(Theorem3Coefficients {
        kappa,
        sigma,
        rho,
        tau0: t,
        b1: -nb / (kappa * s.powi(4)),
        c1: -t * t * nc / (kappa * s.powi(6)),
        b2: a1_of_tau(t, kappa),
        c2: a2_of_tau(t, kappa),
        b3: -nb / (s * s * g),
        c3: -t * t * nc / (s.powi(4) * g),
        tau0_star: t - r2 * shift,
        lambda_eq_d0,
        risk_eq_star: r0_of_tau(t, rho, kappa, sigma),
    })
}

/// The unique positive zero of `σ ↦ B₁(σ, κ)`.
pub fn sigma_b1_root(kappa: f64) -> Result<f64> {
    if !(kappa > 1.0) {
        return Err(PerfError::InvalidInput(format!("kappa = {kappa} must exceed 1")));
    }
    let f = |s: f64| b1_coefficient(kappa, s);
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(PerfError::NoBracket { lo: 0.0, hi });
        }
    }
    if !(f(lo) > 0.0) {
        return Err(PerfError::NoBracket { lo, hi });
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if f(lo).abs() <= f(hi).abs() { lo } else { hi })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalLambdaEq {
    /// `λ*_{eq,D=0}(ρ) + b̄B₁ + c̄ρ²C₁` (first order in `(b̄, c̄)`, second order in ρ).
    pub expansion_lambda: f64,
    /// `R*_eq(ρ) + b̄B₂ + c̄ρ²C₂` (first order in `(b̄, c̄)`, second order in ρ).
    pub expansion_risk: f64,
    /// Grid + golden-section minimum of [`closed_form_isotropic`] over λ.
    pub numeric: Minimum,
    pub coefficients: Theorem3Coefficients,
}

/// Optimal λ for the isotropic-ρ model. `search` defaults to `[1e-4, 2λ*_{D=0} + 1]`.
pub fn optimal_lambda_eq(
    effect: &PerformativeEffect,
    rho: f64,
    kappa: f64,
    sigma: f64,
    search: Option<(f64, f64)>,
) -> Result<OptimalLambdaEq> {
    let c = theorem3_coefficients(kappa, sigma, rho)?;
    let (bb, cb) = (effect.b_bar(), effect.c_bar());
    let r2 = rho * rho;
    let (lo, hi) = search.unwrap_or((1e-4, 2.0 * c.lambda_eq_d0.max(0.0) + 1.0));
    let numeric = grid_then_golden(
        |l| closed_form_isotropic(rho, effect, l, kappa, sigma).map(|f| f.r_tilde),
        &linspace(lo, hi, 100),
        1e-8,
    )?;
    Ok(OptimalLambdaEq {
        expansion_lambda: c.lambda_eq_d0 + bb * c.b1 + cb * r2 * c.c1,
        expansion_risk: c.risk_eq_star + bb * c.b2 + cb * r2 * c.c2,
        numeric,
        coefficients: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn iso_root(kappa: f64, lambda: f64) -> f64 {
        let b = kappa * lambda + kappa - 1.0;
        (b + (b * b + 4.0 * kappa * lambda).sqrt()) / 2.0
    }

    #[test]
    fn tau_isotropic() {
        let cov = BlockCovariance::identity(10);
        let s = solve_tau(&cov, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(s.tau, (3.0 + 17f64.sqrt()) / 2.0, epsilon = 1e-10);
        assert!(s.residual <= 1e-12);
        for &(k, l) in &[(1.1, 0.01), (1.5, 0.3), (3.0, 2.0), (10.0, 0.05)] {
            assert_abs_diff_eq!(solve_tau(&cov, k, l).unwrap().tau, iso_root(k, l), epsilon = 1e-9 * iso_root(k, l));
        }
        let small = solve_tau(&cov, 2.5, 1e-9).unwrap().tau;
        assert_abs_diff_eq!(small, 1.5, epsilon = 1e-6);
    }

    #[test]
    fn tau_rejects_ridgeless() {
        let cov = BlockCovariance::identity(2);
        assert!(matches!(solve_tau(&cov, 2.0, 0.0), Err(PerfError::InvalidInput(_))));
        assert!(matches!(solve_tau(&cov, 0.5, 1.0), Err(PerfError::InvalidInput(_))));
    }

    #[test]
    fn r_eq_null_model() {
        let cov = BlockCovariance::identity(4);
        let e = PerformativeEffect::zero(4);
        let v = r_eq(&cov, &e, 1.0, 2.0, 1.0, &[0.0; 8]).unwrap();
        let t = (3.0 + 17f64.sqrt()) / 2.0;
        let want = 2.0 / ((1.0 + t) * (1.0 + t) - 2.0);
        assert_abs_diff_eq!(v, want, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.10634, epsilon = 5e-6);
        assert_eq!(r_eq(&cov, &e, 1.0, 2.0, 0.0, &[0.0; 8]).unwrap(), 0.0);
    }

    #[test]
    fn r_eq_affine_in_d() {
        let cov = BlockCovariance::isotropic_rho(3, 0.3).unwrap();
        let theta = vec![0.4, -0.2, 0.7, 0.0, 0.0, 0.0];
        let base = r_eq(&cov, &PerformativeEffect::zero(3), 0.5, 1.5, 0.3, &theta).unwrap();
        let plus = PerformativeEffect::constant(3, 0.2, -0.1).unwrap();
        let minus = PerformativeEffect::constant(3, -0.2, 0.1).unwrap();
        let up = r_eq(&cov, &plus, 0.5, 1.5, 0.3, &theta).unwrap() - base;
        let down = r_eq(&cov, &minus, 0.5, 1.5, 0.3, &theta).unwrap() - base;
        assert_abs_diff_eq!(up, -down, epsilon = 1e-14);
        assert!(up.abs() > 1e-6);
    }

    #[test]
    fn one_step_scalar_reduction() {
        let d = 5;
        let cov = BlockCovariance::identity(d);
        let beta = 0.3;
        let e = PerformativeEffect::constant(d, beta, 0.0).unwrap();
        let mut theta = vec![0.1, -0.5, 0.3, 0.2, 0.4];
        theta.resize(2 * d, 0.0);
        let nrm: f64 = theta.iter().map(|x| x * x).sum();
        let (k, l, sg) = (2.0, 0.7, 0.4);
        let t = iso_root(k, l);
        let s = 1.0 + t;
        let want = ((beta - t) / s).powi(2) * nrm + k / (s * s - k) * (sg * sg + t * t * (1.0 + beta).powi(2) * nrm / (s * s));
        let got = r_eq_one_step(&cov, &e, l, k, sg, &theta, &theta).unwrap();
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn d_zero_reductions() {
        let cov = BlockCovariance::isotropic_rho(3, -0.4).unwrap();
        let e = PerformativeEffect::zero(3);
        let theta = vec![0.4, -0.2, 0.7, 0.0, 0.0, 0.0];
        let eq = Equivalent::from_cov(&cov, &e, 0.8, 1.7, 0.5).unwrap();
        let th0a = vec![1.0; 6];
        let th0b = vec![-3.0, 0.5, 0.0, 2.0, 1.0, 0.1];
        assert_eq!(eq.r_eq_one_step(&th0a, &theta).unwrap(), eq.r_eq_one_step(&th0b, &theta).unwrap());
        assert_eq!(eq.r_eq_two_step(&th0a, &theta).unwrap(), eq.r_eq_two_step(&th0b, &theta).unwrap());
        let r = eq.r_eq(&theta).unwrap();
        assert_abs_diff_eq!(eq.r_eq_two_step(&th0a, &theta).unwrap(), r, epsilon = 1e-14);
        assert_abs_diff_eq!(eq.r_eq_one_step(&th0a, &theta).unwrap(), r, epsilon = 1e-14);
        let zero = vec![0.0; 6];
        assert_abs_diff_eq!(eq.r_eq_one_step(&th0a, &zero).unwrap(), eq.r_eq(&zero).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn expected_identity_closed_form() {
        let cov = BlockCovariance::identity(6);
        let (k, l, sg) = (1.8, 0.4, 0.6);
        let t = iso_root(k, l);
        let s2 = (1.0 + t) * (1.0 + t);
        let want = t * t / s2 + k / (s2 - k) * (sg * sg + t * t / s2);
        let got = expected_r_eq(&cov, &PerformativeEffect::zero(6), l, k, sg).unwrap();
        assert_abs_diff_eq!(got, want, epsilon = 1e-13);
    }

    #[test]
    fn closed_form_example() {
        let e = PerformativeEffect::constant(4, 0.1, 0.0).unwrap();
        let f = closed_form_isotropic(0.0, &e, 1.0, 2.0, 1.0).unwrap();
        let t = (3.0 + 17f64.sqrt()) / 2.0;
        let s2 = (1.0 + t) * (1.0 + t);
        assert_abs_diff_eq!(f.r0, t * t / s2 + 2.0 / (s2 - 2.0) * (1.0 + t * t / s2), epsilon = 1e-13);
        // The quoted 0.78079 is rounded by hand; the exact value is 0.780776.
        assert_abs_diff_eq!(f.r0, 0.78079, epsilon = 2e-5);
        assert_abs_diff_eq!(f.r_tilde, 0.77612, epsilon = 1e-5);
        let x = expected_r_eq(&BlockCovariance::identity(4), &e, 1.0, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(x, f.r_tilde, epsilon = 1e-12);
    }

    #[test]
    fn tau0_examples() {
        assert_abs_diff_eq!(tau0(3.0, 0.0), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(tau0(1.1, 0.2), 0.29377, epsilon = 1e-5);
        assert_abs_diff_eq!(tau0(2.0, 1.0), (3.0 + 17f64.sqrt()) / 2.0, epsilon = 1e-12);
        let c = theorem3_coefficients(2.0, 1.0, 0.0).unwrap();
        let s = solve_tau(&BlockCovariance::identity(3), 2.0, c.lambda_eq_d0).unwrap();
        assert_abs_diff_eq!(s.tau, c.tau0, epsilon = 1e-9);
    }

    #[test]
    fn b2_example() {
        let c = theorem3_coefficients(1.1, 0.2, 0.0).unwrap();
        assert_abs_diff_eq!(c.b2, -0.1186, epsilon = 1e-4);
    }

    #[test]
    fn sigma_b1_large_kappa() {
        let s = sigma_b1_root(100.0).unwrap();
        assert_abs_diff_eq!(s * s, 0.5 - 7.0 / 1800.0, epsilon = 2e-4);
        assert!(b1_coefficient(100.0, s).abs() <= 1e-9);
    }
}
