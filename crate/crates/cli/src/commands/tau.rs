use clap::Args;
use perfridge::detequiv::solve_tau_spectrum;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::{Report, Table};
use crate::params::{covariance, one_or_many, SigmaKind};

/// Solve the fixed-point equation for τ on a (κ, λ) grid.
#[derive(Debug, Args, Serialize)]
pub struct Flags {
    /// Aspect ratio p/n; comma-separated list allowed.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub kappa: Option<Vec<f64>>,
    /// Ridge penalty; comma-separated list allowed.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambda: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub sigma_kind: Option<SigmaKind>,
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    /// Total dimension (even).
    #[arg(long)]
    pub p: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    #[serde(deserialize_with = "one_or_many")]
    pub kappa: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub lambda: Vec<f64>,
    pub sigma_kind: SigmaKind,
    pub rho: f64,
    pub p: usize,
    pub seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self { kappa: vec![], lambda: vec![], sigma_kind: SigmaKind::Identity, rho: 0.0, p: 200, seed: 0 }
    }
}

pub fn validate(p: &Params) -> Result<(), CliError> {
    if p.kappa.is_empty() || p.lambda.is_empty() {
        return Err(CliError::usage("tau needs --kappa and --lambda"));
    }
    if let Some(l) = p.lambda.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(CliError::usage(format!("lambda = {l}: tau is defined for lambda > 0 only")));
    }
    if let Some(k) = p.kappa.iter().find(|k| !(**k > 1.0 && k.is_finite())) {
        return Err(CliError::usage(format!("kappa = {k}: tau is defined for kappa > 1 only")));
    }
    if p.p < 2 || p.p % 2 != 0 {
        return Err(CliError::usage(format!("p = {} must be a positive even number", p.p)));
    }
    Ok(())
}

pub fn run(params: Params) -> Result<Report, CliError> {
    validate(&params)?;
    let cov = covariance(params.sigma_kind, params.p / 2, params.rho)?;
    let spectrum = cov.spectrum()?;
    let mut report = Report::new("tau", &params);
    let mut t = Table::new("tau", &["kappa", "lambda", "tau", "residual", "iterations", "status"]);
    for &k in &params.kappa {
        for &l in &params.lambda {
            match solve_tau_spectrum(&spectrum, k, l) {
                Ok(s) => t.push(vec![k.into(), l.into(), s.tau.into(), s.residual.into(), s.iterations.into(), "ok".into()]),
                Err(e) => {
                    report.failures += 1;
                    t.push(vec![k.into(), l.into(), f64::NAN.into(), f64::NAN.into(), 0usize.into(), e.to_string().into()]);
                }
            }
        }
    }
    report.tables.push(t);
    Ok(report)
}
