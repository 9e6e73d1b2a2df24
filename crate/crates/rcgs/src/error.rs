//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad parameters or inconsistent inputs caught before any computation.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Vector/matrix shape disagreement.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A trajectory left the overflow guard region during integration.
    #[error("state diverged at step {step} (norm {norm:.3e} exceeds guard {guard:.1e})")]
    Diverged { step: usize, norm: f64, guard: f64 },

    /// An iterative scheme ran out of its iteration budget.
    #[error("iteration failed to converge: {0}")]
    NonConvergence(String),

    /// Linear solve hit a non-positive pivot (singular or indefinite system).
    #[error("singular system: {0}")]
    Singular(String),

    /// A component of the data has no variance to standardize away.
    #[error("component {component} has zero variance (cannot standardize)")]
    ZeroVariance { component: usize },

    /// A pipeline stage needs an artifact another subcommand produces first.
    #[error("missing artifact {path:?}: run `{needed_command}` first")]
    MissingArtifact { path: String, needed_command: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// Process exit code for the CLI, one per failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Dimension(_) | Error::Config(_) => 2,
            Error::MissingArtifact { .. } => 3,
            Error::Diverged { .. }
            | Error::NonConvergence(_)
            | Error::Singular(_)
            | Error::ZeroVariance { .. } => 4,
            Error::Io(_) | Error::Json(_) => 5,
        }
    }
}
