use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("measure outside M_T: {0}")]
    MeasureNotInMt(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("scheme error: {0}")]
    Scheme(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
