use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("endpoint configuration: {0}")]
    Config(String),
    #[error("prompt template: {0}")]
    Template(String),
    #[error("could not parse a class id from response {raw:?}")]
    Parse { raw: String },
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Http { status: u16, body: String, attempts: u32 },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("malformed completion response: {0}")]
    Response(String),
    #[error("generation: {0}")]
    Generation(String),
    #[error("review: {0}")]
    Review(String),
    #[error(transparent)]
    Text(#[from] textprep::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Number of HTTP attempts made before the error, when it came from the wire.
    pub fn attempts(&self) -> Option<u32> {
        match self {
            Error::Http { attempts, .. } | Error::Transport { attempts, .. } => Some(*attempts),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
