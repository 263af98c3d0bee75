use std::path::PathBuf;

use clap::{Args, ValueEnum};
use perfridge::dataset::{load_and_preprocess, real_rrm_family, CustomRecipe, Recipe, ShiftPlan};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::output::{Report, Table};
use crate::params::{lambda_grid, one_or_many, opt_one_or_many};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecipeKind {
    Housing,
    Lsac,
    /// Use `--target` and `--drop`.
    Custom,
}

/// RRM with injected performative shift on a tabular dataset.
#[derive(Debug, Args, Serialize)]
pub struct Flags {
    /// CSV file to read (never modified).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub recipe: Option<RecipeKind>,
    /// Target column for the custom recipe.
    #[arg(long)]
    pub target: Option<String>,
    /// Columns dropped by the custom recipe.
    #[arg(long, value_delimiter = ',')]
    pub drop: Option<Vec<String>>,
    /// Features receiving the shift b̄; defaults to the recipe's list.
    #[arg(long, value_delimiter = ',')]
    pub performative: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub b_bars: Option<Vec<f64>>,
    /// Training rows per RRM step (default: equal folds).
    #[arg(long)]
    pub per_step_n: Option<usize>,
    #[arg(long)]
    pub n_folds: Option<usize>,
    /// Grid lower bound (default 0).
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_min: Option<f64>,
    /// Grid upper bound (default 0.5).
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    pub lambda_points: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambdas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub dataset: Option<PathBuf>,
    pub recipe: RecipeKind,
    pub target: Option<String>,
    pub drop: Vec<String>,
    pub performative: Option<Vec<String>>,
    #[serde(deserialize_with = "one_or_many")]
    pub b_bars: Vec<f64>,
    pub per_step_n: Option<usize>,
    pub n_folds: usize,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub lambda_points: usize,
    #[serde(deserialize_with = "opt_one_or_many")]
    pub lambdas: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            dataset: None,
            recipe: RecipeKind::Housing,
            target: None,
            drop: vec![],
            performative: None,
            b_bars: vec![0.0, 0.05, 0.1, 0.15, 0.2],
            per_step_n: None,
            n_folds: 5,
            lambda_min: Some(0.0),
            lambda_max: Some(0.5),
            lambda_points: 100,
            lambdas: None,
            seed: 0,
        }
    }
}

pub fn run(params: Params) -> Result<Report, CliError> {
    let grid = lambda_grid(params.lambda_min, params.lambda_max, params.lambda_points, params.lambdas.as_deref())?;
    if params.b_bars.is_empty() {
        return Err(CliError::usage("the b_bars list is empty"));
    }
    let path = params.dataset.clone().ok_or_else(|| CliError::usage("real needs --dataset"))?;
    let recipe = match params.recipe {
        RecipeKind::Housing => Recipe::Housing,
        RecipeKind::Lsac => Recipe::Lsac,
        RecipeKind::Custom => Recipe::Custom(CustomRecipe {
            target: params.target.clone().ok_or_else(|| CliError::usage("the custom recipe needs --target"))?,
            drop: params.drop.clone(),
            keep: None,
        }),
    };
    if !path.is_file() {
        return Err(CliError::usage(format!("dataset file not found: {}", path.display())));
    }
    let ds = load_and_preprocess(&path, &recipe)?;
    let performative = params.performative.clone().unwrap_or_else(|| recipe.default_performative());
    if performative.is_empty() {
        return Err(CliError::usage("no performative features given (use --performative)"));
    }
    let plan = ShiftPlan::new(performative.clone(), params.b_bars[0])?;
    let family = real_rrm_family(&ds, &plan, &params.b_bars, &grid, params.per_step_n, params.n_folds, params.seed)?;

    let mut report = Report::new("real", &params);
    report.note(
        "dataset",
        json!({
            "rows": ds.x.nrows(),
            "features": ds.feature_names,
            "target": ds.provenance.target,
            "performative": performative,
            "preprocessing": ds.provenance.log,
            "baseline": family.first().map(|e| e.baseline),
            "baseline_definition": "minimum over the lambda grid of the test MSE at b_bar = 0 on the same split",
        }),
    );

    let mut curves = Table::new("curves", &["b_bar", "lambda", "mse", "excess_risk", "status"]);
    let mut optima = Table::new("optima", &["b_bar", "lambda_opt", "excess_risk_opt", "mse_opt"]);
    for exp in &family {
        let mut best: Option<(f64, f64, f64)> = None;
        for (i, &l) in grid.iter().enumerate() {
            let fail = &exp.sweep.failures[i];
            if fail.is_some() {
                report.failures += 1;
            }
            let r = exp.sweep.mean_risk[i];
            if fail.is_none() && best.is_none_or(|b| r < b.1) {
                best = Some((l, r, exp.mse[i]));
            }
            curves.push(vec![
                exp.b_bar.into(),
                l.into(),
                exp.mse[i].into(),
                r.into(),
                fail.clone().unwrap_or_else(|| "ok".into()).into(),
            ]);
        }
        let (l, r, m) = best.unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        optima.push(vec![exp.b_bar.into(), l.into(), r.into(), m.into()]);
    }
    report.tables.push(curves);
    report.tables.push(optima);
    Ok(report)
}
