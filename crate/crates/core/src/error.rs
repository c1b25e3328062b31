use thiserror::Error;

use crate::quad::QuadError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("{0}")]
    Quadrature(#[from] QuadError),
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("parameter region violated: {0}")]
    Region(String),
    #[error("degenerate limit: {0}")]
    Degenerate(String),
    #[error("memory budget exceeded: need {required} bytes, budget is {budget} bytes")]
    Memory { required: u64, budget: u64 },
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
