use thiserror::Error;

use crate::model::Violation;

/// Errors raised by model construction, inference and learning.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("model failed validation: {}", join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("graph is not a tree: {0}")]
    NotATree(String),

    #[error("observed node {0} is not a leaf")]
    ObservedNotLeaf(usize),

    #[error("message passing did not converge after {passes} passes (residual {residual:e})")]
    NotConverged { passes: usize, residual: f64 },

    #[error("E-step failed at EM iteration {iteration}: {source}")]
    EStep {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("marginal constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("covariance of state {state} is not positive definite")]
    SingularCovariance { state: usize },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// True for failures of an iterative solver to reach its tolerance,
    /// including those raised inside an EM iteration.
    pub fn is_convergence_failure(&self) -> bool {
        match self {
            Error::NotConverged { .. } => true,
            Error::EStep { source, .. } => source.is_convergence_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
