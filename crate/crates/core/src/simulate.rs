//! Monte-Carlo RRM: Gaussian features, performative labels, ridge refits.
//!
//! A sweep runs many *lanes* (a performative-effect variant paired with a λ)
//! on common random numbers: within a trial every lane sees the same `θ*`, and
//! at each step the same feature matrix and noise vector. This lets the Gram
//! matrix and its factorizations be shared across lanes.

use faer::linalg::matmul::triangular::{matmul as tri_matmul, BlockStructure};
use faer::linalg::solvers::{Llt, Solve};
use faer::{Accum, Mat, Par, Side};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, PerfError, Result};
use crate::linalg::{self, sym_eig};
use crate::model::{
    excess_risk, sample_theta_star, BlockCovariance, ModelSpec, Normalization, PerformativeEffect, RidgeConfig,
    VectorPreset,
};
use crate::rng::{stream, Purpose};

/// Draws rows of `N(0, Σ)`; the factor of `Σ` is computed once.
#[derive(Debug, Clone)]
pub struct FeatureSampler {
    d: usize,
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Iso { rho: f64, r: f64 },
    Dense { lt: Mat<f64> },
}

impl FeatureSampler {
    pub fn new(cov: &BlockCovariance) -> Result<Self> {
        let kind = match cov.rho() {
            Some(rho) => SamplerKind::Iso { rho, r: (1.0 - rho * rho).sqrt() },
            None => SamplerKind::Dense { lt: cov.lower_factor()?.transpose().to_owned() },
        };
        Ok(Self { d: cov.d(), kind })
    }

    pub fn p(&self) -> usize {
        2 * self.d
    }

    /// `n × p` matrix with i.i.d. `N(0, Σ)` rows. Standard normals are drawn in
    /// column-major order and mapped through the factor of `Σ`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Mat<f64> {
        let p = self.p();
        let mut z = Mat::<f64>::zeros(n, p);
        for j in 0..p {
            for v in z.col_mut(j).iter_mut() {
                *v = StandardNormal.sample(rng);
            }
        }
        match &self.kind {
            SamplerKind::Iso { rho, r } => {
                if *rho != 0.0 {
                    let d = self.d;
                    for j in 0..d {
                        for i in 0..n {
                            z[(i, d + j)] = rho * z[(i, j)] + r * z[(i, d + j)];
                        }
                    }
                }
                z
            }
            SamplerKind::Dense { lt } => &z * lt,
        }
    }
}

pub fn sample_features<R: Rng + ?Sized>(cov: &BlockCovariance, n: usize, rng: &mut R) -> Result<Mat<f64>> {
    Ok(FeatureSampler::new(cov)?.sample(n, rng))
}

fn standard_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `y = Xθ* + XDθ_deployed + σz` with `z` drawn from `rng`.
pub fn gen_labels<R: Rng + ?Sized>(spec: &ModelSpec, x: &Mat<f64>, theta_deployed: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    check_len(spec.p(), x.ncols())?;
    check_len(spec.p(), theta_deployed.len())?;
    let shift = spec.effect().apply(theta_deployed);
    let v: Vec<f64> = spec.theta_star().iter().zip(&shift).map(|(a, b)| a + b).collect();
    let mut y = linalg::mat_vec(x, &v);
    let z = standard_normals(x.nrows(), rng);
    for (yi, zi) in y.iter_mut().zip(z) {
        *yi += spec.noise_std() * zi;
    }
    Ok(y)
}

/// Lower triangle of `AᵀA` (or `AAᵀ`) computed, then mirrored.
fn gram(x: &Mat<f64>, outer: bool) -> Mat<f64> {
    let m = if outer { x.nrows() } else { x.ncols() };
    let mut g = Mat::<f64>::zeros(m, m);
    let (lhs, rhs) = if outer { (x.as_ref(), x.transpose()) } else { (x.transpose(), x.as_ref()) };
    tri_matmul(
        g.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        lhs,
        BlockStructure::Rectangular,
        rhs,
        BlockStructure::Rectangular,
        1.0,
        Par::Seq,
    );
    for j in 0..m {
        for i in 0..j {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

fn shifted_llt(g: &Mat<f64>, s: f64) -> Result<Llt<f64>> {
    let mut a = g.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += s;
    }
    a.llt(Side::Lower)
        .map_err(|_| PerfError::SingularSystem(format!("regularized Gram matrix with shift {s:e} is not positive definite")))
}

/// Ridge estimator `(XᵀX + sI)⁻¹Xᵀy` with `s = nλ` (PerN) or `pλ` (PerP).
pub fn ridge_fit(x: &Mat<f64>, y: &[f64], config: &RidgeConfig) -> Result<Vec<f64>> {
    let (n, p) = (x.nrows(), x.ncols());
    check_len(n, y.len())?;
    check_len(config.p, p)?;
    check_len(config.n, n)?;
    let s = config.shift();
    let yc = linalg::col(y);
    if n >= p {
        let llt = shifted_llt(&gram(x, false), s)?;
        let xty = x.transpose() * &yc;
        Ok(linalg::to_vec(&llt.solve(&xty)))
    } else {
        if !(s > 0.0) {
            return Err(PerfError::SingularSystem("n < p needs a positive ridge penalty".into()));
        }
        let llt = shifted_llt(&gram(x, true), s)?;
        let alpha = llt.solve(&yc);
        Ok(linalg::to_vec(&(x.transpose() * &alpha)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub theta_final: Vec<f64>,
    pub risks_per_step: Vec<f64>,
    /// `(master_seed, trial)`.
    pub seed_path: (u64, u64),
}

/// One RRM trajectory: at step `k = 1..=steps` draw fresh features and noise from
/// the streams `(master_seed, trial, k, ·)`, label with the deployed `θ_{k−1}`, refit.
pub fn rrm_run(spec: &ModelSpec, config: &RidgeConfig, steps: usize, theta0: &[f64], master_seed: u64, trial: u64) -> Result<TrialOutcome> {
    if steps == 0 {
        return Err(PerfError::InvalidInput("steps must be at least 1".into()));
    }
    check_len(spec.p(), theta0.len())?;
    check_len(spec.p(), config.p)?;
    let sampler = FeatureSampler::new(spec.cov())?;
    let mut theta = theta0.to_vec();
    let mut risks = Vec::with_capacity(steps);
    for k in 1..=steps as u64 {
        let x = sampler.sample(config.n, &mut stream(master_seed, trial, k, Purpose::Features));
        let y = gen_labels(spec, &x, &theta, &mut stream(master_seed, trial, k, Purpose::Noise))?;
        theta = ridge_fit(&x, &y, config)?;
        risks.push(excess_risk(spec.cov(), &theta, spec.theta_star())?);
    }
    Ok(TrialOutcome { theta_final: theta, risks_per_step: risks, seed_path: (master_seed, trial) })
}

/// Where a variant's `b`, `c` come from.
#[derive(Debug, Clone, PartialEq)]
pub enum EffectSource {
    Fixed(PerformativeEffect),
    /// Drawn once per outer effect draw `o` from the streams `(seed, o, 0|1, effect)`.
    Preset { b: VectorPreset, c: VectorPreset },
}

impl EffectSource {
    /// The effect used by every trial of outer draw `draw`.
    pub fn draw(&self, d: usize, master_seed: u64, draw: u64) -> Result<PerformativeEffect> {
        match self {
            EffectSource::Fixed(e) => {
                check_len(d, e.d())?;
                Ok(e.clone())
            }
            EffectSource::Preset { b, c } => PerformativeEffect::new(
                b.draw(d, &mut stream(master_seed, draw, 0, Purpose::Effect))?,
                c.draw(d, &mut stream(master_seed, draw, 1, Purpose::Effect))?,
            ),
        }
    }

    /// True when the effect is identically zero for every draw.
    pub fn is_null(&self) -> bool {
        let zero = |v: &VectorPreset| match v {
            VectorPreset::Constant { value } => *value == 0.0,
            VectorPreset::UniformSpan { mean } => *mean == 0.0,
            VectorPreset::UniformSd { mean, sd } => *mean == 0.0 && *sd == 0.0,
            VectorPreset::Explicit { values } => values.iter().all(|&x| x == 0.0),
        };
        match self {
            EffectSource::Fixed(e) => e.is_zero(),
            EffectSource::Preset { b, c } => zero(b) && zero(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub effect: EffectSource,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaStarMode {
    /// Fresh `θ*` per trial from the stream `(seed, trial, 0, theta_star)`.
    PerTrial,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneConfig {
    pub n: usize,
    pub normalization: Normalization,
    pub steps: usize,
    /// Trials per effect draw.
    pub n_trials: usize,
    /// Number of outer effect draws; total trials are `effect_draws · n_trials`.
    pub effect_draws: usize,
    pub master_seed: u64,
    pub theta_star: ThetaStarMode,
    /// Defaults to `0`.
    pub theta0: Option<Vec<f64>>,
    /// Record every step. Otherwise only the final step is guaranteed, and
    /// lanes without performative effect skip the earlier steps.
    pub record_all_steps: bool,
}

impl LaneConfig {
    pub fn new(n: usize, normalization: Normalization, steps: usize, n_trials: usize, master_seed: u64) -> Self {
        Self {
            n,
            normalization,
            steps,
            n_trials,
            effect_draws: 1,
            master_seed,
            theta_star: ThetaStarMode::PerTrial,
            theta0: None,
            record_all_steps: false,
        }
    }

    pub fn total_trials(&self) -> usize {
        self.n_trials * self.effect_draws
    }
}

/// Raw output of [`run_lanes`]. Lane `(v, l)` pairs variant `v` with `lambdas[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneSweep {
    pub lambdas: Vec<f64>,
    pub n_variants: usize,
    pub steps: usize,
    /// `risks[lane][trial][step]`; NaN where not computed or failed.
    pub risks: Vec<Vec<Vec<f64>>>,
    /// First failure per lane.
    pub errors: Vec<Option<String>>,
}

impl LaneSweep {
    pub fn lane(&self, variant: usize, lambda_idx: usize) -> usize {
        variant * self.lambdas.len() + lambda_idx
    }

    /// Final-step risk of every trial of a lane.
    pub fn final_risks(&self, variant: usize, lambda_idx: usize) -> Vec<f64> {
        let l = self.lane(variant, lambda_idx);
        self.risks[l].iter().map(|t| t[self.steps - 1]).collect()
    }

    pub fn step_risks(&self, variant: usize, lambda_idx: usize, step: usize) -> Vec<f64> {
        let l = self.lane(variant, lambda_idx);
        self.risks[l].iter().map(|t| t[step - 1]).collect()
    }

    pub fn summary(&self, variant: usize) -> SweepResult {
        let mut mean = Vec::new();
        let mut std = Vec::new();
        let mut failures = Vec::new();
        for li in 0..self.lambdas.len() {
            let (m, s) = mean_std(&self.final_risks(variant, li));
            mean.push(m);
            std.push(s);
            failures.push(self.errors[self.lane(variant, li)].clone());
        }
        SweepResult {
            lambda_grid: self.lambdas.clone(),
            mean_risk: mean,
            std_risk: std,
            n_trials: self.risks.first().map_or(0, |r| r.len()),
            theory_overlay: None,
            failures,
        }
    }
}

/// Mean and sample standard deviation (divisor `n − 1`; 0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, v.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub lambda_grid: Vec<f64>,
    pub mean_risk: Vec<f64>,
    pub std_risk: Vec<f64>,
    pub n_trials: usize,
    pub theory_overlay: Option<Vec<f64>>,
    pub failures: Vec<Option<String>>,
}

impl SweepResult {
    pub fn std_err(&self) -> Vec<f64> {
        let k = (self.n_trials.max(1) as f64).sqrt();
        self.std_risk.iter().map(|s| s / k).collect()
    }
}

/// Shift-indexed linear solver for `(G + sI)⁻¹`.
enum ShiftSolver {
    Chol(Vec<(f64, std::result::Result<Llt<f64>, PerfError>)>),
    Eig { vals: Vec<f64>, vecs: Mat<f64>, scale: f64 },
}

/// Above this many distinct shifts one eigendecomposition beats repeated Cholesky.
const MAX_CHOL_SHIFTS: usize = 25;

impl ShiftSolver {
    fn new(g: &Mat<f64>, shifts: &[f64]) -> Result<Self> {
        if shifts.len() <= MAX_CHOL_SHIFTS {
            Ok(ShiftSolver::Chol(shifts.iter().map(|&s| (s, shifted_llt(g, s))).collect()))
        } else {
            let (vals, vecs) = sym_eig(g)?;
            let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            Ok(ShiftSolver::Eig { vals, vecs, scale })
        }
    }

    /// Solve for the columns of `rhs`, column `j` with shift `shifts[j]`.
    fn solve(&self, rhs: &Mat<f64>, col_shifts: &[f64]) -> Vec<Result<Vec<f64>>> {
        let m = rhs.nrows();
        match self {
            ShiftSolver::Chol(list) => {
                let mut out: Vec<Option<Result<Vec<f64>>>> = vec![None; rhs.ncols()];
                for (s, llt) in list {
                    let cols: Vec<usize> = (0..rhs.ncols()).filter(|&j| col_shifts[j] == *s).collect();
                    if cols.is_empty() {
                        continue;
                    }
                    match llt {
                        Ok(llt) => {
                            let b = Mat::from_fn(m, cols.len(), |i, k| rhs[(i, cols[k])]);
                            let x = llt.solve(&b);
                            for (k, &j) in cols.iter().enumerate() {
                                out[j] = Some(Ok((0..m).map(|i| x[(i, k)]).collect()));
                            }
                        }
                        Err(e) => {
                            for &j in &cols {
                                out[j] = Some(Err(e.clone()));
                            }
                        }
                    }
                }
                out.into_iter().map(|o| o.expect("every shift is factored")).collect()
            }
            ShiftSolver::Eig { vals, vecs, scale } => {
                let w = vecs.transpose() * rhs;
                let mut scaled = w.clone();
                let mut bad = vec![None; rhs.ncols()];
                for j in 0..rhs.ncols() {
                    let s = col_shifts[j];
                    for i in 0..m {
                        let den = vals[i] + s;
                        if !(den > 1e-12 * scale) {
                            bad[j] = Some(PerfError::SingularSystem(format!(
                                "regularized Gram matrix with shift {s:e} is not positive definite"
                            )));
                        }
                        scaled[(i, j)] = w[(i, j)] / den;
                    }
                }
                let x = vecs * &scaled;
                (0..rhs.ncols())
                    .map(|j| match &bad[j] {
                        Some(e) => Err(e.clone()),
                        None => Ok((0..m).map(|i| x[(i, j)]).collect()),
                    })
                    .collect()
            }
        }
    }
}

struct LaneCtx<'a> {
    cov: &'a BlockCovariance,
    sampler: FeatureSampler,
    variants: &'a [Variant],
    lambdas: &'a [f64],
    cfg: &'a LaneConfig,
    null: Vec<bool>,
}

impl LaneCtx<'_> {
    fn shift(&self, lambda: f64) -> f64 {
        match self.cfg.normalization {
            Normalization::PerN => self.cfg.n as f64 * lambda,
            Normalization::PerP => self.cov.p() as f64 * lambda,
        }
    }

    /// Risks `[lane][step]` and the first error per lane for one trial.
    fn run_trial(&self, trial: usize) -> Result<(Vec<Vec<f64>>, Vec<Option<String>>)> {
        let cfg = self.cfg;
        let (d, p, n) = (self.cov.d(), self.cov.p(), cfg.n);
        let seed = cfg.master_seed;
        let t = trial as u64;
        let theta_star = match &cfg.theta_star {
            ThetaStarMode::PerTrial => sample_theta_star(d, &mut stream(seed, t, 0, Purpose::ThetaStar)),
            ThetaStarMode::Fixed(v) => v.clone(),
        };
        let draw = (trial / cfg.n_trials.max(1)) as u64;
        let effects: Vec<PerformativeEffect> =
            self.variants.iter().map(|v| v.effect.draw(d, seed, draw)).collect::<Result<_>>()?;
        let theta0 = cfg.theta0.clone().unwrap_or_else(|| vec![0.0; p]);
        let nl = self.lambdas.len();
        let lanes = self.variants.len() * nl;
        let mut thetas: Vec<Vec<f64>> = vec![theta0; lanes];
        let mut risks = vec![vec![f64::NAN; cfg.steps]; lanes];
        let mut errors: Vec<Option<String>> = vec![None; lanes];
        let needs_all = |lane: usize| cfg.record_all_steps || !self.null[lane / nl];
        let first = if (0..lanes).any(needs_all) { 1 } else { cfg.steps };
        let primal = n >= p;
        for k in first..=cfg.steps {
            let active: Vec<usize> = (0..lanes).filter(|&l| (needs_all(l) || k == cfg.steps) && errors[l].is_none()).collect();
            if active.is_empty() {
                break;
            }
            let x = self.sampler.sample(n, &mut stream(seed, t, k as u64, Purpose::Features));
            let z = standard_normals(n, &mut stream(seed, t, k as u64, Purpose::Noise));
            let v = Mat::from_fn(p, active.len(), |i, j| {
                let l = active[j];
                theta_star[i] + effects[l / nl].apply(&thetas[l])[i]
            });
            let col_shifts: Vec<f64> = active.iter().map(|&l| self.shift(self.lambdas[l % nl])).collect();
            let mut distinct = col_shifts.clone();
            distinct.sort_by(|a, b| a.total_cmp(b));
            distinct.dedup();
            let sig: Vec<f64> = active.iter().map(|&l| self.variants[l / nl].noise_std).collect();
            let solved = if primal {
                let g = gram(&x, false);
                let h = x.transpose() * linalg::col(&z);
                let gv = &g * &v;
                let rhs = Mat::from_fn(p, active.len(), |i, j| gv[(i, j)] + sig[j] * h[i]);
                ShiftSolver::new(&g, &distinct)?.solve(&rhs, &col_shifts)
            } else {
                let kmat = gram(&x, true);
                let xv = &x * &v;
                let rhs = Mat::from_fn(n, active.len(), |i, j| xv[(i, j)] + sig[j] * z[i]);
                let mut dual = ShiftSolver::new(&kmat, &distinct)?.solve(&rhs, &col_shifts);
                for (j, r) in dual.iter_mut().enumerate() {
                    if !(col_shifts[j] > 0.0) {
                        *r = Err(PerfError::SingularSystem("n < p needs a positive ridge penalty".into()));
                    }
                }
                let ok: Vec<usize> = (0..active.len()).filter(|&j| dual[j].is_ok()).collect();
                let alphas = Mat::from_fn(n, ok.len(), |i, k| dual[ok[k]].as_ref().map(|a| a[i]).unwrap_or(0.0));
                let th = x.transpose() * &alphas;
                let mut out: Vec<Result<Vec<f64>>> = dual
                    .into_iter()
                    .map(|r| r.map(|_| Vec::new()))
                    .collect();
                for (kk, &j) in ok.iter().enumerate() {
                    out[j] = Ok((0..p).map(|i| th[(i, kk)]).collect());
                }
                out
            };
            for (j, res) in solved.into_iter().enumerate() {
                let l = active[j];
                match res {
                    Ok(th) => {
                        risks[l][k - 1] = excess_risk(self.cov, &th, &theta_star)?;
                        thetas[l] = th;
                    }
                    Err(e) => errors[l] = Some(e.to_string()),
                }
            }
        }
        Ok((risks, errors))
    }
}

/// Run every (variant, λ) lane for `cfg.total_trials()` trials. Trials run in
/// parallel; results are collected in trial order, so the output depends only
/// on the configuration.
pub fn run_lanes(cov: &BlockCovariance, variants: &[Variant], lambdas: &[f64], cfg: &LaneConfig) -> Result<LaneSweep> {
    if lambdas.is_empty() || variants.is_empty() {
        return Err(PerfError::InvalidInput("need at least one lambda and one variant".into()));
    }
    if cfg.steps == 0 || cfg.n == 0 || cfg.total_trials() == 0 {
        return Err(PerfError::InvalidInput("steps, n and trial counts must be positive".into()));
    }
    if let ThetaStarMode::Fixed(t) = &cfg.theta_star {
        check_len(cov.p(), t.len())?;
    }
    if let Some(t) = &cfg.theta0 {
        check_len(cov.p(), t.len())?;
    }
    for v in variants {
        if !(v.noise_std >= 0.0) {
            return Err(PerfError::InvalidInput(format!("noise_std = {} must be >= 0", v.noise_std)));
        }
    }
    let ctx = LaneCtx {
        cov,
        sampler: FeatureSampler::new(cov)?,
        variants,
        lambdas,
        cfg,
        null: variants.iter().map(|v| v.effect.is_null()).collect(),
    };
    let per_trial: Vec<(Vec<Vec<f64>>, Vec<Option<String>>)> =
        (0..cfg.total_trials()).into_par_iter().map(|t| ctx.run_trial(t)).collect::<Result<_>>()?;
    let lanes = variants.len() * lambdas.len();
    let mut risks = vec![Vec::with_capacity(per_trial.len()); lanes];
    let mut errors: Vec<Option<String>> = vec![None; lanes];
    for (r, e) in per_trial {
        for l in 0..lanes {
            risks[l].push(r[l].clone());
            if errors[l].is_none() {
                errors[l] = e[l].clone();
            }
        }
    }
    Ok(LaneSweep { lambdas: lambdas.to_vec(), n_variants: variants.len(), steps: cfg.steps, risks, errors })
}

/// Data-generating template for a sweep: everything in [`ModelSpec`] except the
/// concrete draws of `θ*`, `b`, `c`.
#[derive(Debug, Clone)]
pub struct ModelTemplate {
    pub cov: BlockCovariance,
    pub effect: EffectSource,
    pub noise_std: f64,
}

/// Mean and standard deviation of the final-step risk over trials, per λ.
pub fn monte_carlo_sweep(template: &ModelTemplate, cfg: &LaneConfig, lambda_grid: &[f64]) -> Result<SweepResult> {
    let variants = [Variant { effect: template.effect.clone(), noise_std: template.noise_std }];
    Ok(run_lanes(&template.cov, &variants, lambda_grid, cfg)?.summary(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ridge_small_example() {
        let x = linalg::identity(2);
        let cfg = RidgeConfig::new(0.5, 2, 2, Normalization::PerN).unwrap();
        let th = ridge_fit(&x, &[1.0, 1.0], &cfg).unwrap();
        assert_abs_diff_eq!(th[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(th[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn labels_shift_example() {
        let cov = BlockCovariance::identity(3);
        let e = PerformativeEffect::constant(3, 0.1, 0.0).unwrap();
        let spec = ModelSpec::new(cov, e, 0.0, vec![0.5, -0.5, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let x = Mat::from_fn(1, 6, |_, _| 1.0);
        let y = gen_labels(&spec, &x, &[2.0, 0.0, 1.0, 0.0, 0.0, 0.0], &mut stream(0, 0, 0, Purpose::Noise)).unwrap();
        assert_abs_diff_eq!(y[0], 1.0 + 0.3, epsilon = 1e-15);
    }

    #[test]
    fn empty_sample() {
        let x = sample_features(&BlockCovariance::identity(2), 0, &mut stream(1, 0, 0, Purpose::Features)).unwrap();
        assert_eq!((x.nrows(), x.ncols()), (0, 4));
    }

    #[test]
    fn dual_and_primal_agree() {
        let cov = BlockCovariance::isotropic_rho(3, 0.2).unwrap();
        let x = sample_features(&cov, 5, &mut stream(2, 0, 0, Purpose::Features)).unwrap();
        let y: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
        let dual = ridge_fit(&x, &y, &RidgeConfig::new(0.3, 5, 6, Normalization::PerP).unwrap()).unwrap();
        let mut a = &x.transpose() * &x;
        for i in 0..6 {
            a[(i, i)] += 6.0 * 0.3;
        }
        let want = linalg::lu_solve(&a, &(x.transpose() * Mat::from_fn(5, 1, |i, _| y[i])), "test").unwrap();
        for i in 0..6 {
            assert_abs_diff_eq!(dual[i], want[(i, 0)], epsilon = 1e-12);
        }
    }
}
