//! Real-data RRM: CSV ingestion, preprocessing, fold splitting and synthetic
//! performative label shift.

use std::path::{Path, PathBuf};

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, PerfError, Result};
use crate::rng::{stream, Purpose};
use crate::simulate::SweepResult;

pub const HOUSING_FEATURES: [&str; 8] =
    ["MedInc", "HouseAge", "AveRooms", "AveBedrms", "Population", "AveOccup", "Latitude", "Longitude"];
pub const HOUSING_TARGET: &str = "MedHouseVal";
pub const HOUSING_PERFORMATIVE: [&str; 3] = ["MedInc", "AveBedrms", "AveOccup"];

pub const LSAC_TARGET: &str = "gpa";
pub const LSAC_REDUNDANT: [&str; 3] = ["male", "parttime", "decile1"];
pub const LSAC_CORRELATED: [&str; 3] = ["ugpa", "index6040", "dnn_bar_pass_prediction"];
pub const LSAC_PERFORMATIVE: [&str; 9] =
    ["Unnamed0", "decile1b", "decile3", "other", "asian", "black", "hisp", "pass_bar", "tier"];

/// Name given to a column with an empty header (a written-out pandas index).
pub const UNNAMED_INDEX: &str = "Unnamed0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Redundant,
    CorrelatedWithTarget,
    Requested,
    NotKept,
    NonNumeric,
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub column: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessLog {
    pub dropped: Vec<DroppedColumn>,
    /// Rows removed because a kept column or the target was missing.
    pub rows_dropped: usize,
    pub rows_kept: usize,
}

impl PreprocessLog {
    fn drop(&mut self, column: &str, reason: DropReason) {
        self.dropped.push(DroppedColumn { column: column.to_string(), reason });
    }

    pub fn zero_variance_columns(&self) -> Vec<&str> {
        self.dropped.iter().filter(|d| d.reason == DropReason::ZeroVariance).map(|d| d.column.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<PathBuf>,
    pub target: String,
    pub log: PreprocessLog,
}

/// Standardized features and centered target.
#[derive(Debug, Clone)]
pub struct TabularDataset {
    pub feature_names: Vec<String>,
    pub x: Mat<f64>,
    pub y: Vec<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomRecipe {
    pub target: String,
    #[serde(default)]
    pub drop: Vec<String>,
    /// When set, only these columns are kept.
    #[serde(default)]
    pub keep: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    Housing,
    Lsac,
    Custom(CustomRecipe),
}

impl Recipe {
    pub fn target(&self) -> &str {
        match self {
            Recipe::Housing => HOUSING_TARGET,
            Recipe::Lsac => LSAC_TARGET,
            Recipe::Custom(c) => &c.target,
        }
    }

    /// Default performative features for the built-in recipes.
    pub fn default_performative(&self) -> Vec<String> {
        let names: &[&str] = match self {
            Recipe::Housing => &HOUSING_PERFORMATIVE,
            Recipe::Lsac => &LSAC_PERFORMATIVE,
            Recipe::Custom(_) => &[],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

fn parse_cell(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| !v.is_nan())
}

fn is_missing_token(s: &str) -> bool {
    matches!(s.trim(), "" | "NA" | "N/A" | "na" | "NaN" | "nan" | "null" | "NULL" | "None")
}

/// Load a CSV and apply a preprocessing recipe.
pub fn load_and_preprocess(path: &Path, recipe: &Recipe) -> Result<TabularDataset> {
    let io = |e: &dyn std::fmt::Display| PerfError::Io { path: path.display().to_string(), msg: e.to_string() };
    let file = std::fs::File::open(path).map_err(|e| io(&e))?;
    let mut ds = read_csv(file, recipe)?;
    ds.provenance.source = Some(path.to_path_buf());
    Ok(ds)
}

/// Same as [`load_and_preprocess`] but reading from any source.
pub fn read_csv<R: std::io::Read>(reader: R, recipe: &Recipe) -> Result<TabularDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| PerfError::ParseError(e.to_string()))?
        .iter()
        .map(|h| match h.trim() {
            "" | "Unnamed: 0" => UNNAMED_INDEX.to_string(),
            t => t.to_string(),
        })
        .collect();
    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for rec in rdr.records() {
        rows.push(rec.map_err(|e| PerfError::ParseError(e.to_string()))?);
    }
    let cell = |r: &csv::StringRecord, j: usize| r.get(j).unwrap_or("").to_string();
    let columns: Vec<Vec<String>> = (0..headers.len()).map(|j| rows.iter().map(|r| cell(r, j)).collect()).collect();
    preprocess(headers, columns, recipe)
}

fn find(headers: &[String], name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| PerfError::MissingColumn(name.to_string()))
}

/// Apply a recipe to raw string columns.
pub fn preprocess(headers: Vec<String>, columns: Vec<Vec<String>>, recipe: &Recipe) -> Result<TabularDataset> {
    check_len(headers.len(), columns.len())?;
    let mut log = PreprocessLog::default();
    let target = recipe.target().to_string();
    let t_idx = find(&headers, &target)?;
    let mut keep = vec![true; headers.len()];
    keep[t_idx] = false;
    let drop_named = |names: &[&str], reason: DropReason, keep: &mut Vec<bool>, log: &mut PreprocessLog| {
        for n in names {
            if let Some(j) = headers.iter().position(|h| h == n) {
                if keep[j] {
                    keep[j] = false;
                    log.drop(n, reason.clone());
                }
            }
        }
    };
    match recipe {
        Recipe::Housing => {
            for f in HOUSING_FEATURES {
                find(&headers, f)?;
            }
            for (j, h) in headers.iter().enumerate() {
                if keep[j] && !HOUSING_FEATURES.contains(&h.as_str()) {
                    keep[j] = false;
                    log.drop(h, DropReason::NotKept);
                }
            }
        }
        Recipe::Lsac => {
            drop_named(&LSAC_REDUNDANT, DropReason::Redundant, &mut keep, &mut log);
            drop_named(&LSAC_CORRELATED, DropReason::CorrelatedWithTarget, &mut keep, &mut log);
        }
        Recipe::Custom(c) => {
            if let Some(k) = &c.keep {
                for n in k {
                    find(&headers, n)?;
                }
                for (j, h) in headers.iter().enumerate() {
                    if keep[j] && !k.contains(h) {
                        keep[j] = false;
                        log.drop(h, DropReason::NotKept);
                    }
                }
            }
            for n in &c.drop {
                find(&headers, n)?;
            }
            let names: Vec<&str> = c.drop.iter().map(String::as_str).collect();
            drop_named(&names, DropReason::Requested, &mut keep, &mut log);
        }
    }

    // A column is numeric when every non-missing cell parses.
    for j in 0..headers.len() {
        if keep[j] {
            let numeric = columns[j].iter().all(|s| is_missing_token(s) || parse_cell(s).is_some());
            let any = columns[j].iter().any(|s| parse_cell(s).is_some());
            if !numeric || !any {
                keep[j] = false;
                log.drop(&headers[j], DropReason::NonNumeric);
            }
        }
    }
    if let Some(bad) = columns[t_idx].iter().find(|s| !is_missing_token(s) && parse_cell(s).is_none()) {
        return Err(PerfError::ParseError(format!("target `{target}` has non-numeric value `{bad}`")));
    }

    let kept: Vec<usize> = (0..headers.len()).filter(|&j| keep[j]).collect();
    let n_raw = columns[t_idx].len();
    let rows: Vec<usize> = (0..n_raw)
        .filter(|&i| parse_cell(&columns[t_idx][i]).is_some() && kept.iter().all(|&j| parse_cell(&columns[j][i]).is_some()))
        .collect();
    log.rows_dropped = n_raw - rows.len();
    log.rows_kept = rows.len();
    if rows.len() < 2 {
        return Err(PerfError::InsufficientRows { need: 2, have: rows.len() });
    }

    let mut names = Vec::new();
    let mut feats: Vec<Vec<f64>> = Vec::new();
    for &j in &kept {
        let col: Vec<f64> = rows.iter().map(|&i| parse_cell(&columns[j][i]).unwrap()).collect();
        match standardize(&col) {
            Some(z) => {
                names.push(headers[j].clone());
                feats.push(z);
            }
            None => log.drop(&headers[j], DropReason::ZeroVariance),
        }
    }
    let y = center(&rows.iter().map(|&i| parse_cell(&columns[t_idx][i]).unwrap()).collect::<Vec<_>>());
    let x = Mat::from_fn(rows.len(), feats.len(), |i, j| feats[j][i]);
    Ok(TabularDataset { feature_names: names, x, y, provenance: Provenance { source: None, target, log } })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn center(v: &[f64]) -> Vec<f64> {
    let m = mean(v);
    v.iter().map(|x| x - m).collect()
}

/// z-score with the population (divide-by-n) standard deviation. `None` for a
/// constant column.
pub fn standardize(v: &[f64]) -> Option<Vec<f64>> {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    let sd = var.sqrt();
    if !(sd > 1e-12 * m.abs().max(1.0)) {
        return None;
    }
    Some(v.iter().map(|x| (x - m) / sd).collect())
}

/// Which features carry the performative coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftPlan {
    pub performative_features: Vec<String>,
    pub b_bar: f64,
    /// Coefficient for every feature not listed; usually 0.
    #[serde(default)]
    pub other: f64,
}

impl ShiftPlan {
    pub fn new(performative_features: Vec<String>, b_bar: f64) -> Result<Self> {
        let p = Self { performative_features, b_bar, other: 0.0 };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        for v in [self.b_bar, self.other] {
            if !(v.abs() < 1.0) {
                return Err(PerfError::InvalidInput(format!("shift coefficient {v} must satisfy |b| < 1")));
            }
        }
        Ok(())
    }

    pub fn with_b_bar(&self, b_bar: f64) -> Result<Self> {
        let p = Self { b_bar, ..self.clone() };
        p.validate()?;
        Ok(p)
    }

    /// Per-feature coefficients aligned with `feature_names`.
    pub fn coefficients(&self, feature_names: &[String]) -> Result<Vec<f64>> {
        self.validate()?;
        for f in &self.performative_features {
            find(feature_names, f)?;
        }
        Ok(feature_names
            .iter()
            .map(|n| if self.performative_features.contains(n) { self.b_bar } else { self.other })
            .collect())
    }
}

/// Label shift `Δy_i = Σ_j coef_j x_ij θ_j`.
pub fn shift_delta(x: &Mat<f64>, coefficients: &[f64], theta_prev: &[f64]) -> Result<Vec<f64>> {
    check_len(x.ncols(), coefficients.len())?;
    check_len(x.ncols(), theta_prev.len())?;
    Ok((0..x.nrows()).map(|i| (0..x.ncols()).map(|j| coefficients[j] * x[(i, j)] * theta_prev[j]).sum()).collect())
}

/// Labels of the next fold after the deployed model `theta_prev` shifts them.
/// Features are untouched.
pub fn inject_shift(x: &Mat<f64>, y: &[f64], coefficients: &[f64], theta_prev: &[f64]) -> Result<Vec<f64>> {
    check_len(x.nrows(), y.len())?;
    let delta = shift_delta(x, coefficients, theta_prev)?;
    Ok(y.iter().zip(delta).map(|(&yi, di)| if di == 0.0 { yi } else { yi + di }).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSplit {
    /// Training folds in deployment order.
    pub train: Vec<Vec<usize>>,
    pub test: Vec<usize>,
}

/// Uniform random permutation sliced into contiguous folds; the last fold is the
/// test fold. With `per_step_n`, each training fold holds exactly that many rows
/// and the test fold takes all the remaining rows.
pub fn split_folds(n_rows: usize, n_folds: usize, per_step_n: Option<usize>, seed: u64) -> Result<FoldSplit> {
    if n_folds < 2 {
        return Err(PerfError::InvalidInput("need at least two folds".into()));
    }
    let mut perm: Vec<usize> = (0..n_rows).collect();
    perm.shuffle(&mut stream(seed, 0, 0, Purpose::Split));
    let k = n_folds - 1;
    match per_step_n {
        Some(m) => {
            let need = m * k + 1;
            if m == 0 || need > n_rows {
                return Err(PerfError::InsufficientRows { need: need.max(k + 1), have: n_rows });
            }
            let train = (0..k).map(|f| perm[f * m..(f + 1) * m].to_vec()).collect();
            Ok(FoldSplit { train, test: perm[k * m..].to_vec() })
        }
        None => {
            if n_rows < n_folds {
                return Err(PerfError::InsufficientRows { need: n_folds, have: n_rows });
            }
            let (base, extra) = (n_rows / n_folds, n_rows % n_folds);
            let mut folds = Vec::with_capacity(n_folds);
            let mut at = 0;
            for f in 0..n_folds {
                let len = base + usize::from(f < extra);
                folds.push(perm[at..at + len].to_vec());
                at += len;
            }
            let test = folds.pop().unwrap();
            Ok(FoldSplit { train: folds, test })
        }
    }
}

fn rows(x: &Mat<f64>, idx: &[usize]) -> Mat<f64> {
    Mat::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

/// Per-fold sufficient statistics for the RRM loop.
struct FoldStats {
    n: f64,
    gram: Mat<f64>,
    xty: Mat<f64>,
}

/// Test MSE of the final RRM model for every λ. The training folds are used in
/// order; fold `k`'s labels are shifted by the model fitted on fold `k − 1`
/// (the first fold sees `θ₀ = 0`). Ridge uses per-n normalization, no intercept.
pub fn real_rrm_curve(ds: &TabularDataset, split: &FoldSplit, coefficients: &[f64], lambda_grid: &[f64]) -> Result<Vec<Result<f64>>> {
    let d = ds.x.ncols();
    check_len(d, coefficients.len())?;
    if lambda_grid.is_empty() {
        return Err(PerfError::InvalidInput("empty lambda grid".into()));
    }
    let test_set: std::collections::HashSet<usize> = split.test.iter().copied().collect();
    assert!(split.train.iter().flatten().all(|i| !test_set.contains(i)), "test rows leaked into training folds");
    let folds: Vec<FoldStats> = split
        .train
        .iter()
        .map(|idx| {
            let x = rows(&ds.x, idx);
            let y: Vec<f64> = idx.iter().map(|&i| ds.y[i]).collect();
            let gram = x.transpose() * &x;
            let xty = x.transpose() * Mat::from_fn(y.len(), 1, |i, _| y[i]);
            FoldStats { n: y.len() as f64, gram, xty }
        })
        .collect();
    let xt = rows(&ds.x, &split.test);
    let yt: Vec<f64> = split.test.iter().map(|&i| ds.y[i]).collect();
    Ok(lambda_grid
        .iter()
        .map(|&lambda| {
            let mut theta = vec![0.0; d];
            for f in &folds {
                // Xᵀ(y + X D θ) = Xᵀy + G D θ
                let dtheta = Mat::from_fn(d, 1, |j, _| coefficients[j] * theta[j]);
                let rhs = &f.xty + &f.gram * &dtheta;
                let mut a = f.gram.clone();
                for j in 0..d {
                    a[(j, j)] += f.n * lambda;
                }
                let llt = a.llt(Side::Lower).map_err(|_| {
                    PerfError::SingularSystem(format!("ridge system not positive definite at lambda = {lambda:e}"))
                })?;
                let sol = llt.solve(&rhs);
                theta = (0..d).map(|j| sol[(j, 0)]).collect();
            }
            let pred = &xt * Mat::from_fn(d, 1, |j, _| theta[j]);
            Ok((0..yt.len()).map(|i| (yt[i] - pred[(i, 0)]).powi(2)).sum::<f64>() / yt.len() as f64)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealExperiment {
    pub b_bar: f64,
    /// Test MSE per λ.
    pub mse: Vec<f64>,
    /// Minimum over the λ grid of test MSE at `b̄ = 0`, same splits.
    pub baseline: f64,
    pub sweep: SweepResult,
}

/// Single-split experiment: reported risk is test MSE minus the `b̄ = 0` grid
/// minimum. `std_risk` is zero since there is only one split.
pub fn real_rrm_experiment(
    ds: &TabularDataset,
    plan: &ShiftPlan,
    lambda_grid: &[f64],
    per_step_n: Option<usize>,
    n_folds: usize,
    seed: u64,
) -> Result<RealExperiment> {
    let split = split_folds(ds.x.nrows(), n_folds, per_step_n, seed)?;
    let coefs = plan.coefficients(&ds.feature_names)?;
    let baseline = real_baseline(ds, &split, lambda_grid)?;
    let curve = real_rrm_curve(ds, &split, &coefs, lambda_grid)?;
    Ok(assemble(plan.b_bar, lambda_grid, curve, baseline))
}

/// Minimum over the grid of the `b̄ = 0` test MSE.
pub fn real_baseline(ds: &TabularDataset, split: &FoldSplit, lambda_grid: &[f64]) -> Result<f64> {
    let zero = vec![0.0; ds.x.ncols()];
    let base = real_rrm_curve(ds, split, &zero, lambda_grid)?;
    base.iter()
        .filter_map(|r| r.as_ref().ok().copied())
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
        .ok_or_else(|| PerfError::SingularSystem("no lambda on the grid gives a valid fit".into()))
}

pub(crate) fn assemble(b_bar: f64, lambda_grid: &[f64], curve: Vec<Result<f64>>, baseline: f64) -> RealExperiment {
    let mse: Vec<f64> = curve.iter().map(|r| *r.as_ref().unwrap_or(&f64::NAN)).collect();
    let failures = curve.iter().map(|r| r.as_ref().err().map(|e| e.to_string())).collect();
    let sweep = SweepResult {
        lambda_grid: lambda_grid.to_vec(),
        mean_risk: mse.iter().map(|m| m - baseline).collect(),
        std_risk: vec![0.0; mse.len()],
        n_trials: 1,
        theory_overlay: None,
        failures,
    };
    RealExperiment { b_bar, mse, baseline, sweep }
}

/// Run several `b̄` values on one split and one baseline.
pub fn real_rrm_family(
    ds: &TabularDataset,
    plan: &ShiftPlan,
    b_bars: &[f64],
    lambda_grid: &[f64],
    per_step_n: Option<usize>,
    n_folds: usize,
    seed: u64,
) -> Result<Vec<RealExperiment>> {
    let split = split_folds(ds.x.nrows(), n_folds, per_step_n, seed)?;
    let baseline = real_baseline(ds, &split, lambda_grid)?;
    b_bars
        .iter()
        .map(|&b| {
            let p = plan.with_b_bar(b)?;
            let coefs = p.coefficients(&ds.feature_names)?;
            Ok(assemble(b, lambda_grid, real_rrm_curve(ds, &split, &coefs, lambda_grid)?, baseline))
        })
        .collect()
}
