use clap::Args;
use perfridge::detequiv::{sigma_b1_root, theorem3_coefficients};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::{Report, Table};
use crate::params::one_or_many;

/// Expansion coefficients of the optimal penalty and risk over a (κ, σ) grid.
#[derive(Debug, Args, Serialize)]
pub struct Flags {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub kappa: Option<Vec<f64>>,
    /// Noise level; comma-separated list allowed.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sigma: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    #[serde(deserialize_with = "one_or_many")]
    pub kappa: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub sigma: Vec<f64>,
    pub rho: f64,
    pub seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            kappa: vec![1.1, 1.5, 2.0, 3.0, 5.0, 10.0, 100.0],
            sigma: (1..=10).map(|i| i as f64 / 10.0).collect(),
            rho: 0.0,
            seed: 0,
        }
    }
}

const COLUMNS: [&str; 16] = [
    "kappa", "sigma", "rho", "tau0", "b1", "b2", "c1", "c2", "b3", "c3", "tau0_star", "lambda_eq_d0", "risk_eq_star",
    "sigma_b1", "sigma_b1_sq", "status",
];

pub fn run(params: Params) -> Result<Report, CliError> {
    if params.kappa.is_empty() || params.sigma.is_empty() {
        return Err(CliError::usage("theorem3 needs a non-empty kappa and sigma grid"));
    }
    if let Some(k) = params.kappa.iter().find(|k| !(**k > 1.0 && k.is_finite())) {
        return Err(CliError::usage(format!("kappa = {k} must exceed 1")));
    }
    if let Some(s) = params.sigma.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(CliError::usage(format!("sigma = {s} must be non-negative")));
    }
    if !(params.rho.abs() < 1.0) {
        return Err(CliError::usage(format!("rho = {} must satisfy |rho| < 1", params.rho)));
    }
    let mut report = Report::new("theorem3", &params);
    let mut t = Table::new("coefficients", &COLUMNS);
    for &k in &params.kappa {
        let root = sigma_b1_root(k);
        let sb = *root.as_ref().unwrap_or(&f64::NAN);
        for &s in &params.sigma {
            match theorem3_coefficients(k, s, params.rho) {
                Ok(c) => {
                    let status = match &root {
                        Ok(_) => "ok".to_string(),
                        Err(e) => {
                            report.failures += 1;
                            format!("sigma_b1: {e}")
                        }
                    };
                    t.push(vec![
                        k.into(), s.into(), params.rho.into(), c.tau0.into(), c.b1.into(), c.b2.into(), c.c1.into(),
                        c.c2.into(), c.b3.into(), c.c3.into(), c.tau0_star.into(), c.lambda_eq_d0.into(),
                        c.risk_eq_star.into(), sb.into(), (sb * sb).into(), status.into(),
                    ]);
                }
                Err(e) => {
                    report.failures += 1;
                    let mut row = vec![k.into(), s.into(), params.rho.into()];
                    row.extend(std::iter::repeat_n(f64::NAN.into(), COLUMNS.len() - 4));
                    row.push(e.to_string().into());
                    t.push(row);
                }
            }
        }
    }
    report.tables.push(t);
    Ok(report)
}
