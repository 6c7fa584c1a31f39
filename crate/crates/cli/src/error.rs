//! Error classification for exit codes: 1 usage/config, 2 data, 3 numeric.

use nanopk::models::ModelError;
use nanopk::{
    AdError, CheckpointError, DataError, EnsembleError, EvalError, FeatError, PipelineError,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration (exit 1).
    Usage(String),
    /// Unreadable, malformed, or insufficient input data (exit 2).
    Data(String),
    /// Numeric failure while fitting or evaluating (exit 3).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FeatError> for CliError {
    fn from(e: FeatError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            // A rejected configuration is the caller's mistake, not the
            // data's or the arithmetic's.
            ModelError::BadConfig { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<AdError> for CliError {
    fn from(e: AdError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Data(d) => d.into(),
            PipelineError::Feature(f) => f.into(),
            PipelineError::Model(m) => m.into(),
            PipelineError::Eval(v) => v.into(),
            PipelineError::Ensemble(s) => s.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
