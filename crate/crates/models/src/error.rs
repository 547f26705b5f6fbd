use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numeric(#[from] numcore::Error),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds maximum length {max}")]
    Length { len: usize, max: usize },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
