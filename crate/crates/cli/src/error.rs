use thiserror::Error;

/// Process exit code for a bad configuration or command line.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit code for numerical trouble or a failed consistency check.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] tfqkd::Error),
    #[error("validation failed for: {0}")]
    ValidationFailed(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("output encoding failed: {0}")]
    Encode(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_CONFIG,
            CliError::Numerical(_) | CliError::ValidationFailed(_) | CliError::Encode(_) => EXIT_NUMERICAL,
        }
    }
}

pub(crate) fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}
