use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid scenario: `{field}` {reason}")]
    InvalidScenario { field: &'static str, reason: String },

    #[error("could not place user {user} of cell {cell} after {attempts} attempts")]
    PlacementExhausted {
        cell: usize,
        user: usize,
        attempts: usize,
    },

    #[error("correlation coefficient {0} is outside [0, 1)")]
    InvalidCorrelation(f64),

    #[error("{what} is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite {
        what: &'static str,
        min_eigenvalue: f64,
    },

    #[error("{what} is singular or not positive definite")]
    Singular { what: &'static str },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("user {user} sees no pilot contamination: the large-array limit is unbounded")]
    UnboundedLimit { user: usize },

    #[error(
        "rate bound is degenerate: base-station RF chains are perfectly matched (lambda2 = 0)"
    )]
    DegenerateBound,

    #[error("invalid mismatch configuration: `{field}` {reason}")]
    InvalidMismatch { field: &'static str, reason: String },

    #[error("base-station gain at antenna {0} is zero")]
    ZeroGain(usize),

    #[error("precondition violated: {0}")]
    Precondition(String),
}
