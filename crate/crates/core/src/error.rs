use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible degree sequence: {0}")]
    Infeasible(String),

    #[error("random regular graph generation exceeded the retry limit of {limit} attempts")]
    RetryLimit { limit: usize },

    #[error("{operation} requires an acyclic (tree or forest) graph, but the graph has a cycle")]
    NotATree { operation: &'static str },

    #[error("graph couplings have not been assigned")]
    CouplingsUnassigned,

    #[error("exact enumeration is capped at p = {cap} spins (got p = {p})")]
    TooLarge { p: usize, cap: usize },

    #[error("matrix is singular or not positive definite (min eigenvalue {min_eigenvalue:e})")]
    Singular { min_eigenvalue: f64 },

    #[error("solver did not converge within {iterations} iterations (last KKT residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Infeasible(_) => "infeasible",
            Error::RetryLimit { .. } => "retry_limit",
            Error::NotATree { .. } => "not_a_tree",
            Error::CouplingsUnassigned => "couplings_unassigned",
            Error::TooLarge { .. } => "too_large",
            Error::Singular { .. } => "singular",
            Error::NonConvergence { .. } => "non_convergence",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
