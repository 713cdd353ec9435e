use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum VecchiaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular system: minimum singular value {min_singular:e} below tolerance")]
    SingularSystem { min_singular: f64 },

    #[error("coordinate pool {dim} has {available} distinct values, need {required}")]
    PoolTooSmall {
        dim: usize,
        available: usize,
        required: usize,
    },

    #[error("point set is not a tensor lattice: {0}")]
    NotAGrid(String),

    #[error("duplicate points at indices {0} and {1}")]
    DuplicatePoints(usize, usize),

    #[error("Matérn regularity {0} is not supported (need 0 < alpha <= 20)")]
    UnsupportedAlpha(f64),

    #[error("parent covariance at node {node} is numerically singular")]
    NearSingularParents { node: usize },

    #[error("size {size} exceeds dense cap {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("conjugate gradient did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("tau = {0} lies outside the hyperprior support [1, inf)")]
    OutOfSupport(f64),

    #[error("empty trace")]
    EmptyTrace,

    #[error("covariance matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("unsupported interpolation order m = {0} (only even m is handled)")]
    UnsupportedOrder(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl VecchiaError {
    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            VecchiaError::InvalidInput(_)
            | VecchiaError::Config(_)
            | VecchiaError::Io(_)
            | VecchiaError::NotAGrid(_)
            | VecchiaError::DuplicatePoints(..)
            | VecchiaError::UnsupportedAlpha(_)
            | VecchiaError::UnsupportedOrder(_)
            | VecchiaError::PoolTooSmall { .. }
            | VecchiaError::CapExceeded { .. } => 2,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for VecchiaError {
    fn from(e: std::io::Error) -> Self {
        VecchiaError::Io(e.to_string())
    }
}

impl From<csv::Error> for VecchiaError {
    fn from(e: csv::Error) -> Self {
        VecchiaError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for VecchiaError {
    fn from(e: serde_json::Error) -> Self {
        VecchiaError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, VecchiaError>;
