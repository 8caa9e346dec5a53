use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("{block} is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { block: &'static str, min_eig: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{what} diverged: norm {norm:e} exceeds guard {guard:e}")]
    Diverged {
        what: &'static str,
        norm: f64,
        guard: f64,
    },
    #[error("{what} did not converge within {cap} iterations")]
    IterationCap { what: &'static str, cap: usize },
    #[error("failed to bracket the secular-equation root")]
    Bracket,
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
