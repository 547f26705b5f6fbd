use thiserror::Error;

/// Errors carry their process exit code: 2 for bad input or usage, 1 for
/// failures inside the pipeline.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<textprep::Error> for CliError {
    fn from(e: textprep::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<models::Error> for CliError {
    fn from(e: models::Error) -> Self {
        match e {
            models::Error::Numeric(_) => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<trainkit::Error> for CliError {
    fn from(e: trainkit::Error) -> Self {
        match e {
            trainkit::Error::Model(m) => m.into(),
            trainkit::Error::Numeric(_) => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<llmgate::Error> for CliError {
    fn from(e: llmgate::Error) -> Self {
        use llmgate::Error as L;
        match e {
            L::Http { .. } | L::Transport { .. } | L::Response(_) | L::Generation(_) => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(format!("JSON: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Wraps an I/O error with the path involved.
pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}
