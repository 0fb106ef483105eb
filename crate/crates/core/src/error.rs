use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("tau must exceed 1 (got {0})")]
    TauTooSmall(f64),
    #[error("grid size must be an even integer >= 8 (got {0})")]
    BadGridSize(usize),
    #[error("grid functions live on different grids")]
    GridMismatch,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("{what} = {value} is outside the domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point set is empty")]
    EmptySet,
    #[error("state became non-finite at t = {t}")]
    Diverged { t: f64 },
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
