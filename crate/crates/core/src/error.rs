use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerfError {
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),
    #[error("singular block: {0}")]
    SingularBlock(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no sign change of the tau equation in [{lo:e}, {hi:e}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("degenerate denominator p - kappa*T = {0:e}")]
    DegenerateDenominator(f64),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("insufficient rows: need {need}, have {have}")]
    InsufficientRows { need: usize, have: usize },
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, PerfError>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(PerfError::DimensionMismatch { expected, got });
    }
    Ok(())
}
