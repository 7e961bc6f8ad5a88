use nalgebra::DMatrix;
use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid setup: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular value decomposition failed: {0}")]
    Svd(String),

    #[error("linear system is singular or not positive definite ({0})")]
    Singular(String),

    /// An iterative solver produced a non-finite or runaway value. The last
    /// finite estimate is kept so callers can still score the run.
    #[error("diverged at iteration {iteration} ({stage})")]
    Diverged { iteration: usize, stage: &'static str, last_finite: Box<DMatrix<f64>> },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
