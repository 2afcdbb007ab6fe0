use thiserror::Error;

use cascade_core::{CascadeError, ModelError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CascadeError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot encode report: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    /// 1 for bad input, 2 for scale or budget limits, 3 for broken internal
    /// invariants.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(CascadeError::ScaleLimit(_)) => 2,
            CliError::Core(CascadeError::Invariant(_)) => 3,
            CliError::Config(_) | CliError::Core(_) | CliError::Io(_) | CliError::Csv(_) => 1,
            CliError::Json(_) => 3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        assert_eq!(CliError::from(ModelError::PriorOrder).exit_code(), 1);
        assert_eq!(
            CliError::Core(CascadeError::Invalid("x".into())).exit_code(),
            1
        );
        assert_eq!(
            CliError::Core(CascadeError::ScaleLimit("x".into())).exit_code(),
            2
        );
        assert_eq!(
            CliError::Core(CascadeError::Invariant("x".into())).exit_code(),
            3
        );
    }
}
