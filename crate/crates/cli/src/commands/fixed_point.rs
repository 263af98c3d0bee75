use clap::Args;
use perfridge::linalg::{norm2, sub};
use perfridge::model::{excess_risk, sample_theta_star, ModelSpec};
use perfridge::population::{contraction_factor, fixed_point, iterations_to_tolerance, population_step};
use perfridge::rng::{stream, Purpose};
use perfridge::simulate::EffectSource;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::output::{Report, Table};
use crate::params::{covariance, preset, SigmaKind, VectorKind};

/// Population RRM trajectory from θ₀ = 0 towards the performative fixed point.
#[derive(Debug, Args, Serialize)]
pub struct Flags {
    /// Dimension of each block (p = 2d).
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, value_enum)]
    pub sigma_kind: Option<SigmaKind>,
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub b_kind: Option<VectorKind>,
    #[arg(long, allow_negative_numbers = true)]
    pub b_bar: Option<f64>,
    #[arg(long)]
    pub b_sd: Option<f64>,
    #[arg(long, value_enum)]
    pub c_kind: Option<VectorKind>,
    #[arg(long, allow_negative_numbers = true)]
    pub c_bar: Option<f64>,
    #[arg(long)]
    pub c_sd: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Relative-error target reported as an iteration count.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub d: usize,
    pub sigma_kind: SigmaKind,
    pub rho: f64,
    pub b_kind: VectorKind,
    pub b_bar: f64,
    pub b_sd: f64,
    pub c_kind: VectorKind,
    pub c_bar: f64,
    pub c_sd: f64,
    pub lambda: Option<f64>,
    pub steps: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            d: 100,
            sigma_kind: SigmaKind::IsotropicRho,
            rho: 0.0,
            b_kind: VectorKind::UniformSpan,
            b_bar: 0.2,
            b_sd: 0.0,
            c_kind: VectorKind::Constant,
            c_bar: 0.0,
            c_sd: 0.0,
            lambda: None,
            steps: 20,
            epsilon: 1e-6,
            seed: 0,
        }
    }
}

pub fn run(params: Params) -> Result<Report, CliError> {
    let lambda = params.lambda.ok_or_else(|| CliError::usage("fixed-point needs --lambda"))?;
    if !lambda.is_finite() {
        return Err(CliError::usage(format!("lambda = {lambda} must be finite")));
    }
    let d = params.d;
    let cov = covariance(params.sigma_kind, d, params.rho)?;
    let source = EffectSource::Preset {
        b: preset(params.b_kind, params.b_bar, params.b_sd)?,
        c: preset(params.c_kind, params.c_bar, params.c_sd)?,
    };
    let effect = source.draw(d, params.seed, 0)?;
    let theta_star = sample_theta_star(d, &mut stream(params.seed, 0, 0, Purpose::ThetaStar));
    let spec = ModelSpec::new(cov.clone(), effect.clone(), 0.0, theta_star.clone())?;

    let fp = fixed_point(&spec, lambda)?;
    let q = contraction_factor(&cov, &effect, lambda);
    let fp_norm = norm2(&fp);

    let mut report = Report::new("fixed-point", &params);
    report.note(
        "summary",
        json!({
            "contraction_factor": q,
            "fixed_point_risk": excess_risk(&cov, &fp, &theta_star)?,
            "iterations_to_tolerance": iterations_to_tolerance(&spec, lambda, params.epsilon).ok(),
            "b_bar_realized": effect.b_bar(),
            "c_bar_realized": effect.c_bar(),
            "theta0": "zero",
        }),
    );

    let mut traj = Table::new("trajectory", &["step", "rel_error", "risk", "bound"]);
    let mut theta = vec![0.0; cov.p()];
    for k in 0..=params.steps {
        if k > 0 {
            theta = population_step(&spec, lambda, &theta)?;
        }
        let rel = if fp_norm > 0.0 { norm2(&sub(&theta, &fp)) / fp_norm } else { norm2(&theta) };
        traj.push(vec![k.into(), rel.into(), excess_risk(&cov, &theta, &theta_star)?.into(), q.powi(k as i32).into()]);
    }
    let mut th = Table::new("theta", &["index", "theta_star", "fixed_point", "theta_final", "effect"]);
    let diag = effect.diag();
    for i in 0..cov.p() {
        th.push(vec![i.into(), theta_star[i].into(), fp[i].into(), theta[i].into(), diag[i].into()]);
    }
    report.tables.push(traj);
    report.tables.push(th);
    Ok(report)
}
