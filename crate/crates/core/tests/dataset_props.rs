use std::io::Write;

use faer::Mat;
use perfridge::dataset::*;
use perfridge::model::{Normalization, RidgeConfig};
use perfridge::rng::{stream, Purpose};
use perfridge::simulate::ridge_fit;
use perfridge::PerfError;
use proptest::prelude::*;
use rand::Rng;

const LSAC_HEADER: &str = ",decile1b,decile3,ID,decile1,sex,race,cluster,lsat,ugpa,zfygpa,DOB_yr,grad,zgpa,bar1,bar1_yr,bar2,bar2_yr,fulltime,fam_inc,age,gender,parttime,male,race1,race2,Dropout,other,asian,black,hisp,pass_bar,bar,tier,index6040,indxgrp,indxgrp2,dnn_bar_pass_prediction,gpa";
const LSAC_TEXT: [&str; 10] = ["grad", "bar1", "bar2", "gender", "race1", "race2", "Dropout", "bar", "indxgrp", "indxgrp2"];

/// Random file with the LSAC column layout: text columns hold words, a few
/// numeric cells are blank.
fn lsac_like(rows: usize, seed: u64) -> tempfile::NamedTempFile {
    let mut rng = stream(seed, 0, 0, Purpose::Features);
    let names: Vec<&str> = LSAC_HEADER.split(',').collect();
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "{LSAC_HEADER}").unwrap();
    for i in 0..rows {
        let cells: Vec<String> = names
            .iter()
            .enumerate()
            .map(|(j, n)| {
                if j == 0 {
                    i.to_string()
                } else if LSAC_TEXT.contains(n) {
                    ["a", "b", "c"][rng.random_range(0..3)].to_string()
                } else if *n == "decile3" && i % 50 == 7 {
                    String::new()
                } else {
                    format!("{:.4}", rng.random::<f64>() * (j as f64))
                }
            })
            .collect();
        writeln!(f, "{}", cells.join(",")).unwrap();
    }
    f
}

/// Housing-style file where the target is a noisy linear function of the features.
fn housing_like(rows: usize, seed: u64) -> tempfile::NamedTempFile {
    let mut rng = stream(seed, 0, 0, Purpose::Features);
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "{},{}", HOUSING_FEATURES.join(","), HOUSING_TARGET).unwrap();
    for _ in 0..rows {
        let x: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let y: f64 = x.iter().enumerate().map(|(j, v)| v * (j as f64 - 3.5) * 0.2).sum::<f64>() + rng.random::<f64>() - 0.5;
        let cells: Vec<String> = x.iter().chain(std::iter::once(&y)).map(|v| format!("{v:.6}")).collect();
        writeln!(f, "{}", cells.join(",")).unwrap();
    }
    f
}

fn assert_standardized(ds: &TabularDataset) {
    let n = ds.x.nrows() as f64;
    for j in 0..ds.x.ncols() {
        let col: Vec<f64> = (0..ds.x.nrows()).map(|i| ds.x[(i, j)]).collect();
        let m = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        assert!(m.abs() <= 1e-9 && (sd - 1.0).abs() <= 1e-9, "column {j}: mean {m}, sd {sd}");
    }
    assert!((ds.y.iter().sum::<f64>() / n).abs() <= 1e-9);
}

#[test]
fn lsac_recipe_keeps_22_features() {
    let f = lsac_like(500, 1);
    let ds = load_and_preprocess(f.path(), &Recipe::Lsac).unwrap();
    assert_eq!(ds.feature_names.len(), 22, "{:?}", ds.feature_names);
    for name in LSAC_PERFORMATIVE {
        assert!(ds.feature_names.iter().any(|n| n == name), "{name} missing");
    }
    for gone in LSAC_REDUNDANT.iter().chain(&LSAC_CORRELATED).chain(&LSAC_TEXT) {
        assert!(!ds.feature_names.iter().any(|n| n == gone));
        assert!(ds.provenance.log.dropped.iter().any(|d| d.column == *gone));
    }
    assert_eq!(ds.provenance.log.rows_dropped, 10);
    assert_eq!(ds.x.nrows(), 490);
    assert_standardized(&ds);
    assert!(ShiftPlan::new(Recipe::Lsac.default_performative(), 0.1).unwrap().coefficients(&ds.feature_names).is_ok());
}

#[test]
fn housing_recipe() {
    let f = housing_like(300, 2);
    let ds = load_and_preprocess(f.path(), &Recipe::Housing).unwrap();
    assert_eq!(ds.feature_names, HOUSING_FEATURES.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    assert_standardized(&ds);
    assert_eq!(ds.provenance.source.as_deref(), Some(f.path()));
}

#[test]
fn missing_file_names_path() {
    let err = load_and_preprocess(std::path::Path::new("/nonexistent/houses.csv"), &Recipe::Housing).unwrap_err();
    assert!(matches!(&err, PerfError::Io { path, .. } if path.contains("houses.csv")));
}

#[test]
fn input_file_untouched() {
    let f = housing_like(50, 3);
    let before = std::fs::read(f.path()).unwrap();
    load_and_preprocess(f.path(), &Recipe::Housing).unwrap();
    assert_eq!(before, std::fs::read(f.path()).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_is_linear(
        b in -0.49f64..0.49,
        x in prop::collection::vec(-3.0f64..3.0, 12),
        th in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let xm = Mat::from_fn(4, 3, |i, j| x[3 * i + j]);
        let one = shift_delta(&xm, &[b, b, 0.0], &th).unwrap();
        let two = shift_delta(&xm, &[2.0 * b, 2.0 * b, 0.0], &th).unwrap();
        for (a, c) in one.iter().zip(&two) {
            prop_assert_eq!(2.0 * a, *c);
        }
        let th2: Vec<f64> = th.iter().map(|v| 2.0 * v).collect();
        let twice = shift_delta(&xm, &[b, b, 0.0], &th2).unwrap();
        for (a, c) in one.iter().zip(&twice) {
            prop_assert_eq!(2.0 * a, *c);
        }
        let y = vec![0.25; 4];
        let shifted = inject_shift(&xm, &y, &[b, b, 0.0], &th).unwrap();
        for i in 0..4 {
            prop_assert!((shifted[i] - y[i] - one[i]).abs() <= 1e-15);
        }
        let zero = inject_shift(&xm, &y, &[0.0; 3], &th).unwrap();
        prop_assert_eq!(zero, y);
    }

    #[test]
    fn standardization_idempotent(v in prop::collection::vec(-100.0f64..100.0, 3..40)) {
        if let Some(z) = standardize(&v) {
            let zz = standardize(&z).unwrap();
            for (a, b) in z.iter().zip(&zz) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn splits_deterministic_and_exhaustive(n in 5usize..400, folds in 2usize..8, seed in 0u64..1000) {
        prop_assume!(n >= folds);
        let a = split_folds(n, folds, None, seed).unwrap();
        prop_assert_eq!(&a, &split_folds(n, folds, None, seed).unwrap());
        let mut all: Vec<usize> = a.train.iter().flatten().chain(&a.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = a.train.iter().map(Vec::len).chain([a.test.len()]).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn per_step_splits_disjoint(m in 1usize..30, extra in 1usize..50, seed in 0u64..100) {
        let n = 4 * m + extra;
        let s = split_folds(n, 5, Some(m), seed).unwrap();
        prop_assert!(s.train.iter().all(|f| f.len() == m));
        let mut all: Vec<usize> = s.train.iter().flatten().chain(&s.test).copied().collect();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), n);
    }
}

#[test]
fn experiment_is_deterministic() {
    let f = housing_like(400, 4);
    let ds = load_and_preprocess(f.path(), &Recipe::Housing).unwrap();
    let plan = ShiftPlan::new(Recipe::Housing.default_performative(), 0.1).unwrap();
    let grid: Vec<f64> = (0..10).map(|i| 0.01 * i as f64).collect();
    let a = real_rrm_experiment(&ds, &plan, &grid, None, 5, 7).unwrap();
    let ds2 = load_and_preprocess(f.path(), &Recipe::Housing).unwrap();
    let b = real_rrm_experiment(&ds2, &plan, &grid, None, 5, 7).unwrap();
    assert_eq!(a, b);
    assert!(a.sweep.mean_risk.iter().all(|v| v.is_finite()));
}

/// Without shift the four rounds collapse to a single fit on the last fold.
#[test]
fn no_shift_collapses_to_last_fold() {
    let f = housing_like(500, 5);
    let ds = load_and_preprocess(f.path(), &Recipe::Housing).unwrap();
    let plan = ShiftPlan::new(Recipe::Housing.default_performative(), 0.0).unwrap();
    let grid = [0.0, 0.05, 0.3];
    let exp = real_rrm_experiment(&ds, &plan, &grid, None, 5, 11).unwrap();
    let split = split_folds(ds.x.nrows(), 5, None, 11).unwrap();
    let last = split.train.last().unwrap();
    let x = Mat::from_fn(last.len(), 8, |i, j| ds.x[(last[i], j)]);
    let y: Vec<f64> = last.iter().map(|&i| ds.y[i]).collect();
    for (k, &l) in grid.iter().enumerate() {
        let th = ridge_fit(&x, &y, &RidgeConfig::new(l, last.len(), 8, Normalization::PerN).unwrap()).unwrap();
        let mse: f64 = split
            .test
            .iter()
            .map(|&i| {
                let pred: f64 = (0..8).map(|j| ds.x[(i, j)] * th[j]).sum();
                (ds.y[i] - pred).powi(2)
            })
            .sum::<f64>()
            / split.test.len() as f64;
        assert!((exp.mse[k] - mse).abs() <= 1e-10 * mse, "λ={l}: {} vs {mse}", exp.mse[k]);
    }
    let best = exp.mse.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(exp.baseline, best);
}

#[test]
fn family_shares_baseline() {
    let f = housing_like(400, 6);
    let ds = load_and_preprocess(f.path(), &Recipe::Housing).unwrap();
    let plan = ShiftPlan::new(Recipe::Housing.default_performative(), 0.0).unwrap();
    let grid: Vec<f64> = (0..5).map(|i| 0.02 * i as f64).collect();
    let fam = real_rrm_family(&ds, &plan, &[0.0, 0.1, 0.2], &grid, Some(60), 5, 3).unwrap();
    assert_eq!(fam.len(), 3);
    assert!(fam.iter().all(|e| e.baseline == fam[0].baseline));
    let zero_min = fam[0].sweep.mean_risk.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(zero_min, 0.0);
    let unknown = ShiftPlan::new(vec!["Nope".into()], 0.1).unwrap();
    assert_eq!(
        real_rrm_experiment(&ds, &unknown, &grid, None, 5, 1).unwrap_err(),
        PerfError::MissingColumn("Nope".into())
    );
}
