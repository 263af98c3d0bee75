//! Parameter resolution: defaults, then the `--config` JSON object, then flags.
//!
//! Every subcommand has a flag struct whose fields are all optional and a
//! params struct with defaults. Flags are serialized, nulls stripped and laid
//! over the config object; the result is deserialized with unknown fields
//! rejected.

use std::path::Path;

use clap::ValueEnum;
use perfridge::model::{BlockCovariance, VectorPreset};
use perfridge::optimize::linspace;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaKind {
    Identity,
    IsotropicRho,
    /// `Σᵢⱼ = ρ^|i−j|` over all `p` coordinates.
    Toeplitz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorKind {
    Constant,
    /// Uniform on `[min(0, 2m), max(0, 2m)]`.
    UniformSpan,
    /// Uniform with mean `m` and standard deviation `sd`.
    UniformSd,
}

pub fn covariance(kind: SigmaKind, d: usize, rho: f64) -> Result<BlockCovariance, CliError> {
    if d == 0 {
        return Err(CliError::usage("dimension must be positive"));
    }
    Ok(match kind {
        SigmaKind::Identity => BlockCovariance::identity(d),
        SigmaKind::IsotropicRho => BlockCovariance::isotropic_rho(d, rho)?,
        SigmaKind::Toeplitz => BlockCovariance::toeplitz(d, rho)?,
    })
}

pub fn preset(kind: VectorKind, mean: f64, sd: f64) -> Result<VectorPreset, CliError> {
    if !mean.is_finite() || !(sd >= 0.0 && sd.is_finite()) {
        return Err(CliError::usage(format!("invalid preset mean {mean} / sd {sd}")));
    }
    Ok(match kind {
        VectorKind::Constant => VectorPreset::Constant { value: mean },
        VectorKind::UniformSpan => VectorPreset::UniformSpan { mean },
        VectorKind::UniformSd => VectorPreset::UniformSd { mean, sd },
    })
}

/// λ grid from an explicit list or `points` evenly spaced values on `[min, max]`.
pub fn lambda_grid(min: Option<f64>, max: Option<f64>, points: usize, list: Option<&[f64]>) -> Result<Vec<f64>, CliError> {
    let grid = match list {
        Some(l) => l.to_vec(),
        None => {
            let (Some(lo), Some(hi)) = (min, max) else {
                return Err(CliError::usage("the lambda grid needs --lambda-min and --lambda-max (or --lambdas)"));
            };
            if !(lo <= hi) {
                return Err(CliError::usage(format!("lambda_min = {lo} exceeds lambda_max = {hi}")));
            }
            linspace(lo, hi, points)
        }
    };
    if grid.is_empty() {
        return Err(CliError::usage("the lambda grid is empty"));
    }
    if let Some(bad) = grid.iter().find(|l| !l.is_finite()) {
        return Err(CliError::usage(format!("lambda grid contains {bad}")));
    }
    Ok(grid)
}

/// Accepts a scalar or an array where a list is expected.
pub fn one_or_many<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

pub fn opt_one_or_many<'de, D: Deserializer<'de>>(de: D) -> Result<Option<Vec<f64>>, D::Error> {
    #[derive(Deserialize)]
    struct Wrap(#[serde(deserialize_with = "one_or_many")] Vec<f64>);
    Ok(Option::<Wrap>::deserialize(de)?.map(|w| w.0))
}

fn strip_nulls(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

pub fn read_config(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(CliError::usage(format!("config {} must be a JSON object", path.display()))),
        Err(e) => Err(CliError::usage(format!("config {}: {e}", path.display()))),
    }
}

/// Merge `flags` over `config` and deserialize.
pub fn resolve<P: DeserializeOwned>(config: Option<Map<String, Value>>, flags: &impl Serialize) -> Result<P, CliError> {
    let mut merged = config.unwrap_or_default();
    merged.extend(strip_nulls(serde_json::to_value(flags).expect("flags serialize")));
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::usage(format!("invalid configuration: {e}")))
}

pub fn check_positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{name} must be > 0, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[derive(Debug, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct P {
        a: f64,
        #[serde(deserialize_with = "one_or_many")]
        b: Vec<f64>,
        kind: SigmaKind,
    }

    impl Default for P {
        fn default() -> Self {
            Self { a: 1.0, b: vec![], kind: SigmaKind::Identity }
        }
    }

    #[test]
    fn flags_override_config_override_defaults() {
        let cfg = json!({"a": 2.0, "b": 3.0, "kind": "isotropic-rho"}).as_object().unwrap().clone();
        let p: P = resolve(Some(cfg.clone()), &json!({"a": null, "b": [4.0, 5.0]})).unwrap();
        assert_eq!(p, P { a: 2.0, b: vec![4.0, 5.0], kind: SigmaKind::IsotropicRho });
        let p: P = resolve(None, &json!({})).unwrap();
        assert_eq!(p, P::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let cfg = json!({"nope": 1}).as_object().unwrap().clone();
        let e = resolve::<P>(Some(cfg), &json!({})).unwrap_err();
        assert!(matches!(e, CliError::Usage(ref m) if m.contains("nope")));
    }

    #[test]
    fn grids() {
        assert_eq!(lambda_grid(Some(0.0), Some(1.0), 3, None).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(lambda_grid(Some(0.0), Some(1.0), 0, None).is_err());
        assert!(lambda_grid(None, Some(1.0), 5, None).is_err());
        assert!(lambda_grid(None, None, 5, Some(&[])).is_err());
        assert_eq!(lambda_grid(None, None, 5, Some(&[0.3])).unwrap(), vec![0.3]);
    }
}
