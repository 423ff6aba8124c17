use hsi_core::HsiError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration: unknown keys, unparsable or out-of-range values,
    /// missing required parameters.
    #[error("configuration error: {0}")]
    Config(String),
    /// Unreadable, malformed or inconsistent input data, unwritable output.
    #[error("data error: {0}")]
    Data(String),
    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }

    /// Wraps a library error raised while validating configuration.
    pub fn config(err: HsiError) -> Self {
        CliError::Config(err.to_string())
    }
}

impl From<HsiError> for CliError {
    fn from(err: HsiError) -> Self {
        match err {
            HsiError::Diverged { .. } => CliError::Divergence(err.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
