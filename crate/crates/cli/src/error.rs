use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or inputs; exit status 2.
    #[error("{0}")]
    Usage(String),
    /// The computation itself failed; exit status 1.
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(e: impl std::error::Error + Send + Sync + 'static) -> Self {
        CliError::Runtime(e.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// Library errors that stem from bad inputs count as usage errors.
impl From<perfridge::PerfError> for CliError {
    fn from(e: perfridge::PerfError) -> Self {
        use perfridge::PerfError::*;
        match e {
            InvalidCovariance(_) | InvalidInput(_) | DimensionMismatch { .. } | MissingColumn(_) | ParseError(_)
            | InsufficientRows { .. } | Io { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.into()),
        }
    }
}
