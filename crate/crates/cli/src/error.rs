use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] aggregate_hmm::Error),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{failed} of {total} jobs failed; see the .failed markers in the output directory")]
    JobsFailed {
        failed: usize,
        total: usize,
        /// Set when every failure was a convergence failure.
        convergence_only: bool,
    },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn file(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::File { path, source }
    }

    /// 2 for invalid input, 3 for convergence failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use aggregate_hmm::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_convergence_failure() => 3,
            CliError::Core(
                E::InvalidDimensions(_)
                | E::DimensionMismatch(_)
                | E::Validation(_)
                | E::ObservedNotLeaf(_)
                | E::NotATree(_)
                | E::Format(_)
                | E::Json(_)
                | E::SingularCovariance { .. }
                | E::ConstraintViolation(_),
            ) => 2,
            CliError::JobsFailed {
                convergence_only: true,
                ..
            } => 3,
            _ => 1,
        }
    }
}
