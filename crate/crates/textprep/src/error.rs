use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vocabulary: {0}")]
    Vocab(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("validation: {0}")]
    Validation(String),
    #[error("char span [{start}, {end}) does not overlap any token")]
    Alignment { start: usize, end: usize },
    #[error("encode: {0}")]
    Encode(String),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
