use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile: {field} {reason}")]
    InvalidProfile { field: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("singular linear system (pivot {pivot:.3e})")]
    Singular { pivot: f64 },

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("unstable dynamics: spectral radius {0:.6} >= 1")]
    Unstable(f64),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
