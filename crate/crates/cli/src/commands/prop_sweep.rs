use clap::{Args, ValueEnum};
use perfridge::detequiv::Equivalent;
use perfridge::model::{sample_theta_star, Normalization};
use perfridge::rng::{stream, Purpose};
use perfridge::simulate::{run_lanes, EffectSource, LaneConfig, SweepResult, ThetaStarMode, Variant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::output::{Cell, Report, Table};
use crate::params::{covariance, lambda_grid, one_or_many, opt_one_or_many, preset, SigmaKind, VectorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaMode {
    /// Fresh θ* for every trial; theory is the θ*-averaged equivalent.
    PerTrial,
    /// One θ* drawn from the seed and shared by all trials.
    Fixed,
}

/// Proportional-regime Monte-Carlo RRM against the deterministic equivalent.
#[derive(Debug, Args, Serialize)]
pub struct Flags {
    /// Target aspect ratio p/n; d is rounded from κn/2.
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    /// Samples per RRM step.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub sigma_kind: Option<SigmaKind>,
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub b_kind: Option<VectorKind>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub b_bar: Option<Vec<f64>>,
    #[arg(long)]
    pub b_sd: Option<f64>,
    #[arg(long, value_enum)]
    pub c_kind: Option<VectorKind>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub c_bar: Option<Vec<f64>>,
    #[arg(long)]
    pub c_sd: Option<f64>,
    /// Label noise σ; comma-separated list allowed.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub noise_std: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    pub lambda_points: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub effect_draws: Option<usize>,
    #[arg(long, value_enum)]
    pub theta_star: Option<ThetaMode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub kappa: f64,
    pub n: usize,
    pub sigma_kind: SigmaKind,
    pub rho: f64,
    pub b_kind: VectorKind,
    #[serde(deserialize_with = "one_or_many")]
    pub b_bar: Vec<f64>,
    pub b_sd: f64,
    pub c_kind: VectorKind,
    #[serde(deserialize_with = "one_or_many")]
    pub c_bar: Vec<f64>,
    pub c_sd: f64,
    #[serde(deserialize_with = "one_or_many")]
    pub noise_std: Vec<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub lambda_points: usize,
    #[serde(deserialize_with = "opt_one_or_many")]
    pub lambdas: Option<Vec<f64>>,
    pub steps: usize,
    pub trials: usize,
    pub effect_draws: usize,
    pub theta_star: ThetaMode,
    pub seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            kappa: 2.0,
            n: 4000,
            sigma_kind: SigmaKind::IsotropicRho,
            rho: 0.0,
            b_kind: VectorKind::Constant,
            b_bar: vec![0.0, 0.2],
            b_sd: 0.0,
            c_kind: VectorKind::Constant,
            c_bar: vec![0.0],
            c_sd: 0.0,
            noise_std: vec![0.5],
            lambda_min: None,
            lambda_max: None,
            lambda_points: 100,
            lambdas: None,
            steps: 5,
            trials: 20,
            effect_draws: 1,
            theta_star: ThetaMode::PerTrial,
            seed: 0,
        }
    }
}

fn grid_argmin(grid: &[f64], v: &[f64]) -> (f64, f64, usize) {
    let mut best = (f64::NAN, f64::INFINITY, usize::MAX);
    for (i, (&l, &r)) in grid.iter().zip(v).enumerate() {
        if r < best.1 {
            best = (l, r, i);
        }
    }
    if best.2 == usize::MAX { (f64::NAN, f64::NAN, 0) } else { best }
}

pub fn run(params: Params) -> Result<Report, CliError> {
    let grid = lambda_grid(params.lambda_min, params.lambda_max, params.lambda_points, params.lambdas.as_deref())?;
    if let Some(l) = grid.iter().find(|l| !(**l > 0.0)) {
        return Err(CliError::usage(format!("lambda = {l}: the proportional regime needs lambda > 0")));
    }
    if !(params.kappa > 1.0 && params.kappa.is_finite()) {
        return Err(CliError::usage(format!("kappa = {} must exceed 1", params.kappa)));
    }
    if params.n == 0 || params.trials == 0 || params.steps == 0 || params.effect_draws == 0 {
        return Err(CliError::usage("n, trials, steps and effect_draws must be positive"));
    }
    if params.b_bar.is_empty() || params.c_bar.is_empty() {
        return Err(CliError::usage("b_bar and c_bar lists must not be empty"));
    }
    if params.noise_std.is_empty() || params.noise_std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(CliError::usage("noise_std must be a non-empty list of non-negative values"));
    }
    let d = ((params.kappa * params.n as f64) / 2.0).round().max(1.0) as usize;
    let p = 2 * d;
    let kappa = p as f64 / params.n as f64;
    if !(kappa > 1.0) {
        return Err(CliError::usage(format!("rounded dimensions give kappa = {kappa}, not above 1")));
    }
    let cov = covariance(params.sigma_kind, d, params.rho)?;
    let spectrum = cov.spectrum()?;

    let mut sources = Vec::new();
    let mut labels = Vec::new();
    for &bb in &params.b_bar {
        for &cb in &params.c_bar {
            for &sg in &params.noise_std {
                sources.push(EffectSource::Preset {
                    b: preset(params.b_kind, bb, params.b_sd)?,
                    c: preset(params.c_kind, cb, params.c_sd)?,
                });
                labels.push((bb, cb, sg));
            }
        }
    }
    let fixed_theta = match params.theta_star {
        ThetaMode::PerTrial => None,
        ThetaMode::Fixed => Some(sample_theta_star(d, &mut stream(params.seed, 0, 0, Purpose::ThetaStar))),
    };
    let mut cfg = LaneConfig::new(params.n, Normalization::PerP, params.steps, params.trials, params.seed);
    cfg.effect_draws = params.effect_draws;
    if let Some(t) = &fixed_theta {
        cfg.theta_star = ThetaStarMode::Fixed(t.clone());
    }
    let variants: Vec<Variant> =
        sources.iter().zip(&labels).map(|(s, l)| Variant { effect: s.clone(), noise_std: l.2 }).collect();
    let sweep = run_lanes(&cov, &variants, &grid, &cfg)?;

    let mut report = Report::new("prop-sweep", &params);
    report.note(
        "derived",
        json!({
            "d": d,
            "p": p,
            "kappa_realized": kappa,
            "normalization": "per_p",
            "theta_star_mode": params.theta_star,
            "theory": match params.theta_star {
                ThetaMode::PerTrial => "expected_r_eq averaged over effect draws",
                ThetaMode::Fixed => "r_eq at the fixed theta*, averaged over effect draws",
            },
        }),
    );

    let mut main = Table::new("curves", &["b_bar", "c_bar", "noise_std", "lambda", "mean", "std", "se", "theory", "status"]);
    let mut optima = Table::new(
        "optima",
        &["b_bar", "c_bar", "noise_std", "lambda_opt_mc", "risk_opt_mc", "se_opt_mc", "lambda_opt_theory", "risk_opt_theory"],
    );
    for (v, src) in sources.iter().enumerate() {
        let (bb, cb, sg) = labels[v];
        let effects = (0..params.effect_draws as u64).map(|o| src.draw(d, params.seed, o)).collect::<Result<Vec<_>, _>>()?;
        let theory: Vec<Result<f64, String>> = grid
            .par_iter()
            .map(|&l| {
                let mut acc = 0.0;
                for eff in &effects {
                    let eq = Equivalent::new(spectrum.clone(), eff, l, kappa, sg).map_err(|e| e.to_string())?;
                    acc += match &fixed_theta {
                        None => eq.expected_r_eq(),
                        Some(t) => eq.r_eq(t).map_err(|e| e.to_string())?,
                    };
                }
                Ok(acc / effects.len() as f64)
            })
            .collect();
        let mut summary: SweepResult = sweep.summary(v);
        summary.theory_overlay = Some(theory.iter().map(|r| *r.as_ref().unwrap_or(&f64::NAN)).collect());
        let se = summary.std_err();
        for (i, &l) in grid.iter().enumerate() {
            let status = match (&summary.failures[i], &theory[i]) {
                (Some(e), _) => Some(e.clone()),
                (None, Err(e)) => Some(format!("theory: {e}")),
                _ => None,
            };
            if status.is_some() {
                report.failures += 1;
            }
            let row: Vec<Cell> = vec![
                bb.into(),
                cb.into(),
                sg.into(),
                l.into(),
                summary.mean_risk[i].into(),
                summary.std_risk[i].into(),
                se[i].into(),
                summary.theory_overlay.as_ref().unwrap()[i].into(),
                status.unwrap_or_else(|| "ok".into()).into(),
            ];
            main.push(row);
        }
        let (lm, rm, im) = grid_argmin(&grid, &summary.mean_risk);
        let (lt, rt, _) = grid_argmin(&grid, summary.theory_overlay.as_ref().unwrap());
        let se_opt = if lm.is_nan() { f64::NAN } else { se[im] };
        optima.push(vec![bb.into(), cb.into(), sg.into(), lm.into(), rm.into(), se_opt.into(), lt.into(), rt.into()]);
    }
    report.tables.push(main);
    report.tables.push(optima);
    Ok(report)
}
