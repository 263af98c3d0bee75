//! Data-generating process: block covariance, performative effect, ground truth.
//!
//! Features are `x ~ N(0, Σ)` with `Σ = [[Σ₁, Σ₁₂], [Σ₁₂ᵀ, Σ₂]]`, labels are
//! `y = xᵀθ* + xᵀDθ + w` with `D = diag(b, c)` and `θ* = (a, 0)`.

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, PerfError, Result};
use crate::linalg::{self, sym_eig, sym_eigvals};
use crate::rng::{stream, Purpose};

/// Relative eigenvalue floor used by every positive-definiteness check.
pub const PD_FLOOR: f64 = 1e-10;
/// Condition number above which a block is treated as singular.
pub const COND_LIMIT: f64 = 1e12;

#[derive(Debug, Clone)]
enum Blocks {
    IsotropicRho { rho: f64 },
    Explicit { sigma1: Mat<f64>, sigma2: Mat<f64>, sigma12: Mat<f64> },
}

#[derive(Debug, Clone)]
pub struct BlockCovariance {
    d: usize,
    blocks: Blocks,
    eig_min: f64,
    eig_max: f64,
}

/// Predictive-block precision `S₁` and the off-diagonal precision block `S₂₁`.
#[derive(Debug, Clone)]
pub struct Schur {
    pub s1: Mat<f64>,
    pub s21: Mat<f64>,
}

impl BlockCovariance {
    /// `Σ₁ = Σ₂ = I_d`, `Σ₁₂ = ρ I_d`.
    pub fn isotropic_rho(d: usize, rho: f64) -> Result<Self> {
        if d == 0 {
            return Err(PerfError::InvalidCovariance("d must be positive".into()));
        }
        if !rho.is_finite() || 1.0 - rho.abs() <= PD_FLOOR * (1.0 + rho.abs()) {
            return Err(PerfError::InvalidCovariance(format!(
                "rho = {rho} makes the covariance singular or indefinite"
            )));
        }
        Ok(Self {
            d,
            blocks: Blocks::IsotropicRho { rho },
            eig_min: 1.0 - rho.abs(),
            eig_max: 1.0 + rho.abs(),
        })
    }

    pub fn identity(d: usize) -> Self {
        Self::isotropic_rho(d, 0.0).expect("identity covariance")
    }

    pub fn from_blocks(sigma1: Mat<f64>, sigma2: Mat<f64>, sigma12: Mat<f64>) -> Result<Self> {
        let d = sigma1.nrows();
        if d == 0 {
            return Err(PerfError::InvalidCovariance("d must be positive".into()));
        }
        for (name, m) in [("sigma1", &sigma1), ("sigma2", &sigma2), ("sigma12", &sigma12)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(PerfError::InvalidCovariance(format!(
                    "{name} is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.col_iter().any(|c| c.iter().any(|v| !v.is_finite())) {
                return Err(PerfError::InvalidCovariance(format!("{name} has non-finite entries")));
            }
        }
        for (name, m) in [("sigma1", &sigma1), ("sigma2", &sigma2)] {
            let scale = m.norm_max().max(f64::MIN_POSITIVE);
            if linalg::max_asym(m) > 1e-12 * scale {
                return Err(PerfError::InvalidCovariance(format!("{name} is not symmetric")));
            }
        }
        let full = assemble_blocks(&sigma1, &sigma2, &sigma12);
        let ev = sym_eigvals(&full)?;
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if !(hi > 0.0) || lo <= PD_FLOOR * hi {
            return Err(PerfError::InvalidCovariance(format!(
                "smallest eigenvalue {lo:e} is below the floor {PD_FLOOR:e}*{hi:e}"
            )));
        }
        Ok(Self { d, blocks: Blocks::Explicit { sigma1, sigma2, sigma12 }, eig_min: lo, eig_max: hi })
    }

    /// AR(1) (Toeplitz) covariance `Σ_ij = r^|i-j|` over all `p = 2d` coordinates.
    pub fn toeplitz(d: usize, r: f64) -> Result<Self> {
        let p = 2 * d;
        let full = Mat::from_fn(p, p, |i, j| r.powi((i as i32 - j as i32).abs()));
        Self::from_full(d, &full)
    }

    pub fn from_full(d: usize, full: &Mat<f64>) -> Result<Self> {
        if full.nrows() != 2 * d || full.ncols() != 2 * d {
            return Err(PerfError::InvalidCovariance("full matrix must be 2d x 2d".into()));
        }
        let s1 = full.submatrix(0, 0, d, d).to_owned();
        let s2 = full.submatrix(d, d, d, d).to_owned();
        let s12 = full.submatrix(0, d, d, d).to_owned();
        let s21 = full.submatrix(d, 0, d, d);
        let scale = full.norm_max().max(f64::MIN_POSITIVE);
        for j in 0..d {
            for i in 0..d {
                if (s12[(i, j)] - s21[(j, i)]).abs() > 1e-12 * scale {
                    return Err(PerfError::InvalidCovariance("full matrix is not symmetric".into()));
                }
            }
        }
        Self::from_blocks(s1, s2, s12)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        2 * self.d
    }

    /// `Some(ρ)` when the covariance was built as isotropic-ρ.
    pub fn rho(&self) -> Option<f64> {
        match self.blocks {
            Blocks::IsotropicRho { rho } => Some(rho),
            Blocks::Explicit { .. } => None,
        }
    }

    pub fn op_norm(&self) -> f64 {
        self.eig_max
    }

    pub fn min_eig(&self) -> f64 {
        self.eig_min
    }

    pub fn sigma1(&self) -> Mat<f64> {
        match &self.blocks {
            Blocks::IsotropicRho { .. } => linalg::identity(self.d),
            Blocks::Explicit { sigma1, .. } => sigma1.clone(),
        }
    }

    pub fn sigma2(&self) -> Mat<f64> {
        match &self.blocks {
            Blocks::IsotropicRho { .. } => linalg::identity(self.d),
            Blocks::Explicit { sigma2, .. } => sigma2.clone(),
        }
    }

    pub fn sigma12(&self) -> Mat<f64> {
        match &self.blocks {
            Blocks::IsotropicRho { rho } => Mat::from_fn(self.d, self.d, |i, j| if i == j { *rho } else { 0.0 }),
            Blocks::Explicit { sigma12, .. } => sigma12.clone(),
        }
    }

    pub fn assemble(&self) -> Mat<f64> {
        assemble_blocks(&self.sigma1(), &self.sigma2(), &self.sigma12())
    }

    /// `Σ v` without forming `Σ` in the isotropic case.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.d;
        match &self.blocks {
            Blocks::IsotropicRho { rho } => {
                let mut out = vec![0.0; 2 * d];
                for i in 0..d {
                    out[i] = v[i] + rho * v[d + i];
                    out[d + i] = rho * v[i] + v[d + i];
                }
                out
            }
            Blocks::Explicit { sigma1, sigma2, sigma12 } => {
                let v1 = linalg::col(&v[..d]);
                let v2 = linalg::col(&v[d..]);
                let top = sigma1 * &v1 + sigma12 * &v2;
                let bot = sigma12.transpose() * &v1 + sigma2 * &v2;
                let mut out = linalg::to_vec(&top);
                out.extend(linalg::to_vec(&bot));
                out
            }
        }
    }

    /// `uᵀ Σ u`.
    pub fn quad_form(&self, u: &[f64]) -> f64 {
        let d = self.d;
        match &self.blocks {
            Blocks::IsotropicRho { rho } => {
                let mut s = 0.0;
                for i in 0..d {
                    let (a, b) = (u[i], u[d + i]);
                    s += a * a + b * b + 2.0 * rho * a * b;
                }
                s
            }
            Blocks::Explicit { .. } => linalg::dot(u, &self.apply(u)),
        }
    }

    pub fn schur_predictive(&self) -> Result<Schur> {
        match &self.blocks {
            Blocks::IsotropicRho { rho } => {
                let s = 1.0 / (1.0 - rho * rho);
                let d = self.d;
                Ok(Schur {
                    s1: Mat::from_fn(d, d, |i, j| if i == j { s } else { 0.0 }),
                    s21: Mat::from_fn(d, d, |i, j| if i == j { -rho * s } else { 0.0 }),
                })
            }
            Blocks::Explicit { sigma1, sigma2, sigma12 } => schur_predictive_blocks(sigma1, sigma2, sigma12),
        }
    }

    /// Lower-triangular `L` with `L Lᵀ = Σ`.
    pub fn lower_factor(&self) -> Result<Mat<f64>> {
        let d = self.d;
        match &self.blocks {
            Blocks::IsotropicRho { rho } => {
                let r = (1.0 - rho * rho).sqrt();
                Ok(Mat::from_fn(2 * d, 2 * d, |i, j| {
                    if i == j {
                        if i < d { 1.0 } else { r }
                    } else if i == j + d {
                        *rho
                    } else {
                        0.0
                    }
                }))
            }
            Blocks::Explicit { .. } => {
                let full = self.assemble();
                let llt = full
                    .llt(faer::Side::Lower)
                    .map_err(|_| PerfError::InvalidCovariance("Cholesky factorization failed".into()))?;
                Ok(llt.L().to_owned())
            }
        }
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        match &self.blocks {
            Blocks::IsotropicRho { rho } => Ok(Spectrum { d: self.d, kind: SpecKind::Iso { rho: *rho } }),
            Blocks::Explicit { .. } => {
                let (vals, vecs) = sym_eig(&self.assemble())?;
                let v1 = vecs.submatrix(0, 0, self.d, vecs.ncols());
                let top = v1.transpose() * v1;
                Ok(Spectrum { d: self.d, kind: SpecKind::Dense { vals, vecs, top } })
            }
        }
    }
}

fn assemble_blocks(s1: &Mat<f64>, s2: &Mat<f64>, s12: &Mat<f64>) -> Mat<f64> {
    let d = s1.nrows();
    Mat::from_fn(2 * d, 2 * d, |i, j| match (i < d, j < d) {
        (true, true) => s1[(i, j)],
        (true, false) => s12[(i, j - d)],
        (false, true) => s12[(j, i - d)],
        (false, false) => s2[(i - d, j - d)],
    })
}

fn check_conditioning(m: &Mat<f64>, what: &str) -> Result<()> {
    let ev = sym_eigvals(m)?;
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if !(lo > 0.0) || hi / lo > COND_LIMIT {
        return Err(PerfError::SingularBlock(format!(
            "{what} has eigenvalues in [{lo:e}, {hi:e}]"
        )));
    }
    Ok(())
}

/// Schur complement inverse `S₁ = (Σ₁ − Σ₁₂Σ₂⁻¹Σ₂₁)⁻¹` and `S₂₁ = −Σ₂⁻¹Σ₂₁S₁`.
pub fn schur_predictive_blocks(sigma1: &Mat<f64>, sigma2: &Mat<f64>, sigma12: &Mat<f64>) -> Result<Schur> {
    let d = sigma1.nrows();
    check_conditioning(sigma2, "sigma2")?;
    let s2_inv_s21 = linalg::lu_solve(sigma2, &sigma12.transpose().to_owned(), "sigma2")
        .map_err(|e| PerfError::SingularBlock(e.to_string()))?;
    let comp = sigma1 - sigma12 * &s2_inv_s21;
    let comp = Mat::from_fn(d, d, |i, j| 0.5 * (comp[(i, j)] + comp[(j, i)]));
    check_conditioning(&comp, "Schur complement")?;
    let s1 = linalg::lu_solve(&comp, &linalg::identity(d), "Schur complement")
        .map_err(|e| PerfError::SingularBlock(e.to_string()))?;
    let s1 = Mat::from_fn(d, d, |i, j| 0.5 * (s1[(i, j)] + s1[(j, i)]));
    let s21 = -(&s2_inv_s21 * &s1);
    Ok(Schur { s1, s21 })
}

pub fn assemble_sigma(cov: &BlockCovariance) -> Mat<f64> {
    cov.assemble()
}

pub fn schur_predictive(cov: &BlockCovariance) -> Result<Schur> {
    cov.schur_predictive()
}

#[derive(Debug, Clone)]
enum SpecKind {
    Iso { rho: f64 },
    Dense { vals: Vec<f64>, vecs: Mat<f64>, top: Mat<f64> },
}

/// Spectral calculus on `Σ`: traces and products of matrix functions `f(Σ)`
/// interleaved with diagonal matrices.
#[derive(Debug, Clone)]
pub struct Spectrum {
    d: usize,
    kind: SpecKind,
}

impl Spectrum {
    pub fn p(&self) -> usize {
        2 * self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Distinct eigenvalues with multiplicities.
    pub fn eigenvalues(&self) -> Vec<(f64, usize)> {
        match &self.kind {
            SpecKind::Iso { rho } => {
                if *rho == 0.0 {
                    vec![(1.0, 2 * self.d)]
                } else {
                    vec![(1.0 + rho, self.d), (1.0 - rho, self.d)]
                }
            }
            SpecKind::Dense { vals, .. } => vals.iter().map(|&v| (v, 1)).collect(),
        }
    }

    fn iso_parts(rho: f64, f: &impl Fn(f64) -> f64) -> (f64, f64) {
        let (fp, fm) = (f(1.0 + rho), f(1.0 - rho));
        (0.5 * (fp + fm), 0.5 * (fp - fm))
    }

    /// `Tr f(Σ)`.
    pub fn trace(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.eigenvalues().iter().map(|&(v, m)| m as f64 * f(v)).sum()
    }

    /// `Tr[(f(Σ))₁]`, the trace of the top-left `d×d` block.
    pub fn block1_trace(&self, f: impl Fn(f64) -> f64) -> f64 {
        match &self.kind {
            SpecKind::Iso { rho } => self.d as f64 * Self::iso_parts(*rho, &f).0,
            SpecKind::Dense { vals, top, .. } => vals.iter().enumerate().map(|(i, &v)| f(v) * top[(i, i)]).sum(),
        }
    }

    /// `f(Σ) v`.
    pub fn apply(&self, f: impl Fn(f64) -> f64, v: &[f64]) -> Vec<f64> {
        let d = self.d;
        match &self.kind {
            SpecKind::Iso { rho } => {
                let (fa, fb) = Self::iso_parts(*rho, &f);
                let mut out = vec![0.0; 2 * d];
                for i in 0..d {
                    out[i] = fa * v[i] + fb * v[d + i];
                    out[d + i] = fb * v[i] + fa * v[d + i];
                }
                out
            }
            SpecKind::Dense { vals, vecs, .. } => {
                let mut w = vecs.transpose() * linalg::col(v);
                for (i, &l) in vals.iter().enumerate() {
                    w[i] *= f(l);
                }
                linalg::to_vec(&(vecs * &w))
            }
        }
    }

    fn rotated_diag(vecs: &Mat<f64>, diag: &[f64]) -> Mat<f64> {
        let scaled = Mat::from_fn(vecs.nrows(), vecs.ncols(), |i, j| diag[i] * vecs[(i, j)]);
        vecs.transpose() * scaled
    }

    /// `Tr[(f(Σ) diag g(Σ))₁]`.
    pub fn block1_trace_fdg(&self, f: impl Fn(f64) -> f64, diag: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        let d = self.d;
        match &self.kind {
            SpecKind::Iso { rho } => {
                let (fa, fb) = Self::iso_parts(*rho, &f);
                let (ga, gb) = Self::iso_parts(*rho, &g);
                let sb: f64 = diag[..d].iter().sum();
                let sc: f64 = diag[d..].iter().sum();
                fa * ga * sb + fb * gb * sc
            }
            SpecKind::Dense { vals, vecs, top } => {
                let m = Self::rotated_diag(vecs, diag);
                let fv: Vec<f64> = vals.iter().map(|&v| f(v)).collect();
                let gv: Vec<f64> = vals.iter().map(|&v| g(v)).collect();
                let mut s = 0.0;
                for j in 0..vals.len() {
                    for i in 0..vals.len() {
                        s += fv[i] * m[(i, j)] * gv[j] * top[(j, i)];
                    }
                }
                s
            }
        }
    }

    /// `Tr[f(Σ) diag g(Σ) diag]`.
    pub fn trace_fdgd(&self, f: impl Fn(f64) -> f64, diag: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        let d = self.d;
        match &self.kind {
            SpecKind::Iso { rho } => {
                let (fa, fb) = Self::iso_parts(*rho, &f);
                let (ga, gb) = Self::iso_parts(*rho, &g);
                let sq: f64 = diag.iter().map(|x| x * x).sum();
                let cross: f64 = (0..d).map(|i| diag[i] * diag[d + i]).sum();
                fa * ga * sq + 2.0 * fb * gb * cross
            }
            SpecKind::Dense { vals, vecs, .. } => {
                let m = Self::rotated_diag(vecs, diag);
                let fv: Vec<f64> = vals.iter().map(|&v| f(v)).collect();
                let gv: Vec<f64> = vals.iter().map(|&v| g(v)).collect();
                let mut s = 0.0;
                for j in 0..vals.len() {
                    for i in 0..vals.len() {
                        s += fv[i] * gv[j] * m[(i, j)] * m[(i, j)];
                    }
                }
                s
            }
        }
    }
}

/// Performative effect `D = diag(b, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformativeEffect {
    b: Vec<f64>,
    c: Vec<f64>,
}

impl PerformativeEffect {
    pub fn new(b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        check_len(b.len(), c.len())?;
        if b.is_empty() {
            return Err(PerfError::InvalidInput("effect vectors must be nonempty".into()));
        }
        for (name, v) in [("b", &b), ("c", &c)] {
            let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if !(m < 1.0) {
                return Err(PerfError::InvalidInput(format!("‖{name}‖∞ = {m} must be < 1")));
            }
        }
        Ok(Self { b, c })
    }

    pub fn zero(d: usize) -> Self {
        Self { b: vec![0.0; d], c: vec![0.0; d] }
    }

    pub fn constant(d: usize, b_bar: f64, c_bar: f64) -> Result<Self> {
        Self::new(vec![b_bar; d], vec![c_bar; d])
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn d(&self) -> usize {
        self.b.len()
    }

    pub fn b_bar(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.b.len() as f64
    }

    pub fn c_bar(&self) -> f64 {
        self.c.iter().sum::<f64>() / self.c.len() as f64
    }

    /// Diagonal of `D` as a length-`p` vector.
    pub fn diag(&self) -> Vec<f64> {
        let mut v = self.b.clone();
        v.extend_from_slice(&self.c);
        v
    }

    pub fn max_abs(&self) -> f64 {
        self.b.iter().chain(&self.c).fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.b.iter().chain(&self.c).all(|&x| x == 0.0)
    }

    /// Multiply every entry by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.b.iter().map(|x| s * x).collect(), self.c.iter().map(|x| s * x).collect())
    }

    /// `D v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.d();
        (0..2 * d).map(|i| if i < d { self.b[i] * v[i] } else { self.c[i - d] * v[i] }).collect()
    }
}

/// Generators for the entries of `b` or `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum VectorPreset {
    Constant { value: f64 },
    /// Uniform on `[min(0, 2m), max(0, 2m)]`.
    UniformSpan { mean: f64 },
    /// Uniform on `[m − sd·√3, m + sd·√3]`.
    UniformSd { mean: f64, sd: f64 },
    Explicit { values: Vec<f64> },
}

impl VectorPreset {
    pub fn zero() -> Self {
        VectorPreset::Constant { value: 0.0 }
    }

    pub fn mean(&self) -> f64 {
        match self {
            VectorPreset::Constant { value } => *value,
            VectorPreset::UniformSpan { mean } | VectorPreset::UniformSd { mean, .. } => *mean,
            VectorPreset::Explicit { values } => values.iter().sum::<f64>() / values.len().max(1) as f64,
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, VectorPreset::UniformSpan { mean } if *mean != 0.0)
            || matches!(self, VectorPreset::UniformSd { sd, .. } if *sd != 0.0)
    }

    pub fn draw<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Result<Vec<f64>> {
        let uniform = |lo: f64, hi: f64, rng: &mut R| -> Vec<f64> {
            (0..d).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
        };
        let v = match self {
            VectorPreset::Constant { value } => vec![*value; d],
            VectorPreset::UniformSpan { mean } => {
                let (lo, hi) = (0f64.min(2.0 * mean), 0f64.max(2.0 * mean));
                uniform(lo, hi, rng)
            }
            VectorPreset::UniformSd { mean, sd } => {
                let h = sd * 3f64.sqrt();
                uniform(mean - h, mean + h, rng)
            }
            VectorPreset::Explicit { values } => {
                check_len(d, values.len())?;
                values.clone()
            }
        };
        Ok(v)
    }
}

/// Full specification of the performative data-generating process.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    cov: BlockCovariance,
    effect: PerformativeEffect,
    noise_std: f64,
    theta_star: Vec<f64>,
}

impl ModelSpec {
    pub fn new(cov: BlockCovariance, effect: PerformativeEffect, noise_std: f64, theta_star: Vec<f64>) -> Result<Self> {
        check_len(cov.d(), effect.d())?;
        check_len(cov.p(), theta_star.len())?;
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(PerfError::InvalidInput(format!("noise_std = {noise_std} must be finite and >= 0")));
        }
        if theta_star[cov.d()..].iter().any(|&x| x != 0.0) {
            return Err(PerfError::InvalidInput("theta_star must vanish on the spurious block".into()));
        }
        Ok(Self { cov, effect, noise_std, theta_star })
    }

    pub fn cov(&self) -> &BlockCovariance {
        &self.cov
    }

    pub fn effect(&self) -> &PerformativeEffect {
        &self.effect
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn d(&self) -> usize {
        self.cov.d()
    }

    pub fn p(&self) -> usize {
        self.cov.p()
    }

    pub fn with_theta_star(&self, theta_star: Vec<f64>) -> Result<Self> {
        Self::new(self.cov.clone(), self.effect.clone(), self.noise_std, theta_star)
    }

    pub fn with_effect(&self, effect: PerformativeEffect) -> Result<Self> {
        Self::new(self.cov.clone(), effect, self.noise_std, self.theta_star.clone())
    }

    pub fn with_noise(&self, noise_std: f64) -> Result<Self> {
        Self::new(self.cov.clone(), self.effect.clone(), noise_std, self.theta_star.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `(XᵀX/n + λI)⁻¹ Xᵀy / n`.
    PerN,
    /// `(1/p)(XᵀX/p + λI)⁻¹ Xᵀy`.
    PerP,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub lambda: f64,
    pub n: usize,
    pub p: usize,
    pub normalization: Normalization,
}

impl RidgeConfig {
    pub fn new(lambda: f64, n: usize, p: usize, normalization: Normalization) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(PerfError::InvalidInput("n and p must be positive".into()));
        }
        if !lambda.is_finite() {
            return Err(PerfError::InvalidInput("lambda must be finite".into()));
        }
        if normalization == Normalization::PerP && lambda <= 0.0 {
            return Err(PerfError::InvalidInput(format!(
                "per-p normalization requires lambda > 0, got {lambda}"
            )));
        }
        Ok(Self { lambda, n, p, normalization })
    }

    pub fn kappa(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    /// Diagonal shift `s` such that the estimator is `(XᵀX + sI)⁻¹Xᵀy`.
    pub fn shift(&self) -> f64 {
        match self.normalization {
            Normalization::PerN => self.n as f64 * self.lambda,
            Normalization::PerP => self.p as f64 * self.lambda,
        }
    }
}

/// `(θ − θ*)ᵀ Σ (θ − θ*)`.
pub fn excess_risk(cov: &BlockCovariance, theta: &[f64], theta_star: &[f64]) -> Result<f64> {
    check_len(cov.p(), theta.len())?;
    check_len(cov.p(), theta_star.len())?;
    let u = linalg::sub(theta, theta_star);
    Ok(cov.quad_form(&u).max(0.0))
}

/// `θ* = (a, 0)` with `a ~ N(0, I_d/d)`.
pub fn sample_theta_star<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let s = 1.0 / (d as f64).sqrt();
    let mut v: Vec<f64> = (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            s * z
        })
        .collect();
    v.resize(2 * d, 0.0);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlocksDoc {
    pub sigma1: Vec<Vec<f64>>,
    pub sigma2: Vec<Vec<f64>>,
    pub sigma12: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaDoc {
    IsotropicRho { rho: f64 },
    Explicit { blocks: BlocksDoc },
}

/// JSON form of a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpecDoc {
    pub d: usize,
    pub sigma: SigmaDoc,
    pub b: VectorPreset,
    pub c: VectorPreset,
    pub sigma_noise: f64,
    pub theta_star_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<Vec<f64>>,
}

fn rows_to_mat(rows: &[Vec<f64>], d: usize, name: &str) -> Result<Mat<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(PerfError::InvalidCovariance(format!("{name} must be {d}x{d}")));
    }
    Ok(Mat::from_fn(d, d, |i, j| rows[i][j]))
}

fn mat_to_rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

impl ModelSpecDoc {
    pub fn covariance(&self) -> Result<BlockCovariance> {
        match &self.sigma {
            SigmaDoc::IsotropicRho { rho } => BlockCovariance::isotropic_rho(self.d, *rho),
            SigmaDoc::Explicit { blocks } => BlockCovariance::from_blocks(
                rows_to_mat(&blocks.sigma1, self.d, "sigma1")?,
                rows_to_mat(&blocks.sigma2, self.d, "sigma2")?,
                rows_to_mat(&blocks.sigma12, self.d, "sigma12")?,
            ),
        }
    }

    /// Draw `b`, `c` and `θ*` from streams keyed by `theta_star_seed`.
    pub fn build(&self) -> Result<ModelSpec> {
        let cov = self.covariance()?;
        let b = self.b.draw(self.d, &mut stream(self.theta_star_seed, 0, 0, Purpose::Effect))?;
        let c = self.c.draw(self.d, &mut stream(self.theta_star_seed, 0, 1, Purpose::Effect))?;
        let effect = PerformativeEffect::new(b, c)?;
        let theta_star = match &self.theta_star {
            Some(t) => t.clone(),
            None => sample_theta_star(self.d, &mut stream(self.theta_star_seed, 0, 0, Purpose::ThetaStar)),
        };
        ModelSpec::new(cov, effect, self.sigma_noise, theta_star)
    }

    pub fn from_spec(spec: &ModelSpec, theta_star_seed: u64) -> Self {
        let cov = spec.cov();
        let sigma = match cov.rho() {
            Some(rho) => SigmaDoc::IsotropicRho { rho },
            None => SigmaDoc::Explicit {
                blocks: BlocksDoc {
                    sigma1: mat_to_rows(&cov.sigma1()),
                    sigma2: mat_to_rows(&cov.sigma2()),
                    sigma12: mat_to_rows(&cov.sigma12()),
                },
            },
        };
        Self {
            d: spec.d(),
            sigma,
            b: VectorPreset::Explicit { values: spec.effect().b().to_vec() },
            c: VectorPreset::Explicit { values: spec.effect().c().to_vec() },
            sigma_noise: spec.noise_std(),
            theta_star_seed,
            theta_star: Some(spec.theta_star().to_vec()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn eye(d: usize) -> Mat<f64> {
        linalg::identity(d)
    }

    #[test]
    fn identity_assembles_to_identity() {
        let s = BlockCovariance::identity(3).assemble();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(s[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn isotropic_rho_eigenvalues() {
        let cov = BlockCovariance::isotropic_rho(4, 0.5).unwrap();
        let ev = sym_eigvals(&cov.assemble()).unwrap();
        for v in &ev[..4] {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-12);
        }
        for v in &ev[4..] {
            assert_abs_diff_eq!(*v, 1.5, epsilon = 1e-12);
        }
        let explicit = BlockCovariance::from_full(4, &cov.assemble()).unwrap();
        assert_abs_diff_eq!(explicit.min_eig(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(explicit.op_norm(), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn rho_one_is_rejected() {
        assert!(matches!(BlockCovariance::isotropic_rho(3, 1.0), Err(PerfError::InvalidCovariance(_))));
        let d = 3;
        let r = BlockCovariance::from_blocks(eye(d), eye(d), eye(d));
        assert!(matches!(r, Err(PerfError::InvalidCovariance(_))));
    }

    #[test]
    fn schur_identity_and_rho() {
        let s = BlockCovariance::identity(3).schur_predictive().unwrap();
        assert_abs_diff_eq!(s.s1[(1, 1)], 1.0);
        let cov = BlockCovariance::isotropic_rho(3, 0.4).unwrap();
        let explicit = BlockCovariance::from_full(3, &cov.assemble()).unwrap();
        let s = explicit.schur_predictive().unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(s.s1[(i, i)], 1.0 / 0.84, epsilon = 1e-12);
            assert_abs_diff_eq!(s.s21[(i, i)], -0.4 / 0.84, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(s.s1[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn schur_zero_sigma2_is_singular() {
        let d = 2;
        let r = schur_predictive_blocks(&eye(d), &Mat::zeros(d, d), &Mat::zeros(d, d));
        assert!(matches!(r, Err(PerfError::SingularBlock(_))));
    }

    #[test]
    fn excess_risk_examples() {
        let cov = BlockCovariance::identity(2);
        let t = vec![0.3, -0.1, 0.0, 0.0];
        assert_eq!(excess_risk(&cov, &t, &t).unwrap(), 0.0);
        assert_abs_diff_eq!(excess_risk(&cov, &[1.0, 0.0, 0.0, 0.0], &[0.0; 4]).unwrap(), 1.0);
        let two = Mat::from_fn(2, 2, |i, j| if i == j { 2.0 } else { 0.0 });
        let cov2 = BlockCovariance::from_blocks(two, eye(2), Mat::zeros(2, 2)).unwrap();
        assert_abs_diff_eq!(excess_risk(&cov2, &[1.0, 0.0, 0.0, 0.0], &[0.0; 4]).unwrap(), 2.0, epsilon = 1e-14);
        assert!(matches!(excess_risk(&cov, &[0.0; 3], &[0.0; 4]), Err(PerfError::DimensionMismatch { .. })));
    }

    #[test]
    fn theta_star_shape() {
        let mut r = stream(1, 0, 0, Purpose::ThetaStar);
        let t = sample_theta_star(1, &mut r);
        let mut r2 = stream(1, 0, 0, Purpose::ThetaStar);
        let g: f64 = StandardNormal.sample(&mut r2);
        assert_eq!(t, vec![g, 0.0]);
        let t = sample_theta_star(50, &mut r);
        assert!(t[50..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn effect_invariants() {
        assert!(PerformativeEffect::new(vec![1.0], vec![0.0]).is_err());
        assert!(PerformativeEffect::new(vec![0.5], vec![-1.2]).is_err());
        let e = PerformativeEffect::new(vec![0.1, 0.3], vec![-0.2, 0.0]).unwrap();
        assert_abs_diff_eq!(e.b_bar(), 0.2);
        assert_abs_diff_eq!(e.c_bar(), -0.1);
        assert_eq!(e.diag(), vec![0.1, 0.3, -0.2, 0.0]);
    }

    #[test]
    fn presets_stay_in_range() {
        let mut r = stream(3, 0, 0, Purpose::Effect);
        let v = VectorPreset::UniformSpan { mean: -0.1 }.draw(500, &mut r).unwrap();
        assert!(v.iter().all(|&x| (-0.2..=0.0).contains(&x)));
        let v = VectorPreset::UniformSd { mean: 0.2, sd: 0.1 }.draw(500, &mut r).unwrap();
        let h = 0.1 * 3f64.sqrt();
        assert!(v.iter().all(|&x| x >= 0.2 - h && x <= 0.2 + h));
    }

    #[test]
    fn ridge_config_rules() {
        assert!(RidgeConfig::new(0.0, 10, 20, Normalization::PerP).is_err());
        assert!(RidgeConfig::new(-0.1, 10, 5, Normalization::PerN).is_ok());
        let c = RidgeConfig::new(0.5, 10, 20, Normalization::PerP).unwrap();
        assert_eq!(c.kappa(), 2.0);
        assert_eq!(c.shift(), 10.0);
    }

    #[test]
    fn spectrum_iso_matches_dense() {
        let iso = BlockCovariance::isotropic_rho(3, 0.35).unwrap();
        let dense = BlockCovariance::from_full(3, &iso.assemble()).unwrap();
        let (si, sd) = (iso.spectrum().unwrap(), dense.spectrum().unwrap());
        let f = |x: f64| 1.0 / (x + 0.7);
        let g = |x: f64| x * x / (x + 0.7);
        let diag = vec![0.1, -0.2, 0.3, 0.05, 0.4, -0.1];
        let v = vec![0.3, -1.0, 0.2, 0.5, 0.0, 0.7];
        assert_abs_diff_eq!(si.trace(f), sd.trace(f), epsilon = 1e-12);
        assert_abs_diff_eq!(si.block1_trace(g), sd.block1_trace(g), epsilon = 1e-12);
        assert_abs_diff_eq!(si.block1_trace_fdg(f, &diag, g), sd.block1_trace_fdg(f, &diag, g), epsilon = 1e-12);
        assert_abs_diff_eq!(si.trace_fdgd(f, &diag, g), sd.trace_fdgd(f, &diag, g), epsilon = 1e-12);
        let (a, b) = (si.apply(g, &v), sd.apply(g, &v));
        for i in 0..6 {
            assert_abs_diff_eq!(a[i], b[i], epsilon = 1e-12);
        }
        let (qa, qb) = (iso.quad_form(&v), dense.quad_form(&v));
        assert_abs_diff_eq!(qa, qb, epsilon = 1e-12);
    }

    #[test]
    fn lower_factor_reproduces_sigma() {
        let iso = BlockCovariance::isotropic_rho(2, -0.6).unwrap();
        let l = iso.lower_factor().unwrap();
        let s = &l * l.transpose();
        let full = iso.assemble();
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(s[(i, j)], full[(i, j)], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn doc_round_trip() {
        let doc: ModelSpecDoc = serde_json::from_str(
            r#"{"d":3,"sigma":{"kind":"isotropic_rho","rho":0.25},
                "b":{"kind":"uniform_span","params":{"mean":0.2}},
                "c":{"kind":"constant","params":{"value":-0.1}},
                "sigma_noise":0.1,"theta_star_seed":9}"#,
        )
        .unwrap();
        let spec = doc.build().unwrap();
        assert_eq!(spec.cov().rho(), Some(0.25));
        assert_eq!(spec.effect().c(), &[-0.1, -0.1, -0.1]);
        let back = ModelSpecDoc::from_spec(&spec, 9);
        let spec2 = back.build().unwrap();
        assert_eq!(spec.theta_star(), spec2.theta_star());
        assert_eq!(spec.effect(), spec2.effect());
        let text = serde_json::to_string(&back).unwrap();
        let again: ModelSpecDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(again, back);
    }
}
