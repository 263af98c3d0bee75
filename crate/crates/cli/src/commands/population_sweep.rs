use clap::Args;
use perfridge::model::{excess_risk, sample_theta_star, BlockCovariance, Normalization, PerformativeEffect};
use perfridge::population::{
    exact_avg_risk, fixed_points, numeric_optimal_lambda, optimal_population, risk_first_order, risk_second_order,
    second_order_minimizer, LambdaSearch,
};
use perfridge::rng::{stream, Purpose};
use perfridge::simulate::{mean_std, run_lanes, EffectSource, LaneConfig, Variant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::output::{Cell, Report, Table};
use crate::params::{covariance, lambda_grid, one_or_many, opt_one_or_many, preset, SigmaKind, VectorKind};

/// Population-regime risk curves with first/second-order approximations.
#[derive(Debug, Args, Serialize)]
pub struct Flags {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, value_enum)]
    pub sigma_kind: Option<SigmaKind>,
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub b_kind: Option<VectorKind>,
    /// Mean of the entries of b; comma-separated list gives one curve each.
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
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    pub lambda_points: Option<usize>,
    /// Explicit λ grid; overrides min/max/points.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambdas: Option<Vec<f64>>,
    /// Independent draws of b and c.
    #[arg(long)]
    pub effect_draws: Option<usize>,
    /// Draws of θ* per effect draw for the empirical fixed-point columns (0 skips them).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Sample size for finite-n Monte-Carlo RRM columns (omit to skip).
    #[arg(long)]
    pub mc_n: Option<usize>,
    #[arg(long)]
    pub mc_steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub d: usize,
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
    pub noise_std: f64,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub lambda_points: usize,
    #[serde(deserialize_with = "opt_one_or_many")]
    pub lambdas: Option<Vec<f64>>,
    pub effect_draws: usize,
    pub trials: usize,
    pub mc_n: Option<usize>,
    pub mc_steps: usize,
    pub seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            d: 100,
            sigma_kind: SigmaKind::IsotropicRho,
            rho: 0.0,
            b_kind: VectorKind::UniformSpan,
            b_bar: vec![0.2],
            b_sd: 0.0,
            c_kind: VectorKind::Constant,
            c_bar: vec![0.0],
            c_sd: 0.0,
            noise_std: 0.1,
            lambda_min: None,
            lambda_max: None,
            lambda_points: 100,
            lambdas: None,
            effect_draws: 5,
            trials: 20,
            mc_n: None,
            mc_steps: 5,
            seed: 0,
        }
    }
}

struct Curve {
    b_bar: f64,
    c_bar: f64,
    draws: Vec<PerformativeEffect>,
}

/// Theory and empirical columns at one λ for one curve.
fn point(cov: &BlockCovariance, curve: &Curve, thetas: &[Vec<Vec<f64>>], lambda: f64) -> Result<[f64; 5], String> {
    let k = curve.draws.len() as f64;
    let (mut ex, mut fo, mut so) = (0.0, 0.0, 0.0);
    let mut emp = Vec::new();
    for (eff, th) in curve.draws.iter().zip(thetas) {
        let e = |r: perfridge::Result<f64>| r.map_err(|e| e.to_string());
        ex += e(exact_avg_risk(cov, eff, lambda))? / k;
        fo += e(risk_first_order(cov, eff, lambda))? / k;
        so += e(risk_second_order(cov, eff, lambda))? / k;
        if !th.is_empty() {
            for (fp, ts) in fixed_points(cov, eff, lambda, th).map_err(|e| e.to_string())?.iter().zip(th) {
                emp.push(excess_risk(cov, fp, ts).map_err(|e| e.to_string())?);
            }
        }
    }
    let (m, s) = if emp.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&emp) };
    Ok([ex, fo, so, m, s])
}

pub fn run(params: Params) -> Result<Report, CliError> {
    let grid = lambda_grid(params.lambda_min, params.lambda_max, params.lambda_points, params.lambdas.as_deref())?;
    if params.b_bar.is_empty() || params.c_bar.is_empty() {
        return Err(CliError::usage("b_bar and c_bar lists must not be empty"));
    }
    if params.effect_draws == 0 {
        return Err(CliError::usage("effect_draws must be at least 1"));
    }
    let d = params.d;
    let cov = covariance(params.sigma_kind, d, params.rho)?;

    let mut sources = Vec::new();
    let mut curves = Vec::new();
    for &bb in &params.b_bar {
        for &cb in &params.c_bar {
            let src = EffectSource::Preset {
                b: preset(params.b_kind, bb, params.b_sd)?,
                c: preset(params.c_kind, cb, params.c_sd)?,
            };
            let draws = (0..params.effect_draws as u64).map(|o| src.draw(d, params.seed, o)).collect::<Result<_, _>>()?;
            curves.push(Curve { b_bar: bb, c_bar: cb, draws });
            sources.push(src);
        }
    }
    // θ* for outer draw o, inner trial t sits on stream trial o·trials + t, as in the lane engine.
    let thetas: Vec<Vec<Vec<f64>>> = (0..params.effect_draws)
        .map(|o| {
            (0..params.trials)
                .map(|t| sample_theta_star(d, &mut stream(params.seed, (o * params.trials + t) as u64, 0, Purpose::ThetaStar)))
                .collect()
        })
        .collect();

    let mc = match params.mc_n {
        Some(n) => {
            if params.trials == 0 {
                return Err(CliError::usage("Monte-Carlo columns need trials >= 1"));
            }
            let mut cfg = LaneConfig::new(n, Normalization::PerN, params.mc_steps, params.trials, params.seed);
            cfg.effect_draws = params.effect_draws;
            let variants: Vec<Variant> =
                sources.iter().map(|s| Variant { effect: s.clone(), noise_std: params.noise_std }).collect();
            let sweep = run_lanes(&cov, &variants, &grid, &cfg)?;
            Some((0..variants.len()).map(|v| sweep.summary(v)).collect::<Vec<_>>())
        }
        None => None,
    };

    let mut report = Report::new("population-sweep", &params);
    report.note(
        "notes",
        json!({
            "theory": "exact, first_order and second_order are averaged over effect draws",
            "empirical": "risk of the population fixed point for sampled theta*, pooled over effect draws",
            "theta_star_mode": "per_trial",
            "mc_normalization": "per_n",
        }),
    );

    let mut cols = vec!["b_bar", "c_bar", "lambda", "exact", "first_order", "second_order", "emp_mean", "emp_std"];
    if mc.is_some() {
        cols.extend(["mc_mean", "mc_std", "mc_se"]);
    }
    cols.push("status");
    let mut main = Table::new("curves", &cols);
    for (ci, curve) in curves.iter().enumerate() {
        let rows: Vec<Result<[f64; 5], String>> = grid.par_iter().map(|&l| point(&cov, curve, &thetas, l)).collect();
        for (li, (r, &l)) in rows.into_iter().zip(&grid).enumerate() {
            let mut row: Vec<Cell> = vec![curve.b_bar.into(), curve.c_bar.into(), l.into()];
            let mut status = match r {
                Ok(vals) => {
                    row.extend(vals.iter().map(|&v| Cell::from(v)));
                    None
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n(Cell::from(f64::NAN), 5));
                    Some(e)
                }
            };
            if let Some(mc) = &mc {
                let s = &mc[ci];
                row.extend([s.mean_risk[li].into(), s.std_risk[li].into(), s.std_err()[li].into()]);
                if let (None, Some(e)) = (&status, &s.failures[li]) {
                    status = Some(format!("monte carlo: {e}"));
                }
            }
            if status.is_some() {
                report.failures += 1;
            }
            row.push(status.unwrap_or_else(|| "ok".into()).into());
            main.push(row);
        }
    }

    let mut markers = Table::new(
        "markers",
        &["b_bar", "c_bar", "draw", "b_bar_realized", "lambda_emp", "risk_emp", "lambda_pop", "risk_pop", "lambda_pop2", "status"],
    );
    let search = LambdaSearch::Grid(grid.clone());
    for curve in &curves {
        let mut acc = [0.0f64; 6];
        let k = curve.draws.len() as f64;
        for (o, eff) in curve.draws.iter().enumerate() {
            let mut errs = Vec::new();
            let emp = numeric_optimal_lambda(&cov, eff, &search)
                .map(|m| (m.argmin, m.min))
                .unwrap_or_else(|e| {
                    errs.push(format!("lambda_emp: {e}"));
                    (f64::NAN, f64::NAN)
                });
            let pop = optimal_population(&cov, eff).map(|p| (p.lambda_star, p.risk_star)).unwrap_or_else(|e| {
                errs.push(format!("lambda_pop: {e}"));
                (f64::NAN, f64::NAN)
            });
            let pop2 = second_order_minimizer(&cov, eff).unwrap_or_else(|e| {
                errs.push(format!("lambda_pop2: {e}"));
                f64::NAN
            });
            let vals = [eff.b_bar(), emp.0, emp.1, pop.0, pop.1, pop2];
            for (a, v) in acc.iter_mut().zip(vals) {
                *a += v / k;
            }
            if !errs.is_empty() {
                report.failures += 1;
            }
            let status = if errs.is_empty() { "ok".to_string() } else { errs.join("; ") };
            let mut row: Vec<Cell> = vec![curve.b_bar.into(), curve.c_bar.into(), o.to_string().into()];
            row.extend(vals.iter().map(|&v| Cell::from(v)));
            row.push(status.into());
            markers.push(row);
        }
        let mut row: Vec<Cell> = vec![curve.b_bar.into(), curve.c_bar.into(), "mean".into()];
        row.extend(acc.iter().map(|&v| Cell::from(v)));
        row.push("ok".into());
        markers.push(row);
    }
    report.tables.push(main);
    report.tables.push(markers);
    Ok(report)
}
