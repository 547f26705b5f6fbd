use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("split: {0}")]
    Split(String),
    #[error("augmentation: {requested} synthetic examples exceed the cap; at most {allowed} fit alongside {base} base examples")]
    CapExceeded { requested: usize, allowed: usize, base: usize },
    #[error("augmentation: {0}")]
    Augmentation(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error(transparent)]
    Model(#[from] models::Error),
    #[error(transparent)]
    Numeric(#[from] numcore::Error),
}
