use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter, shape or configuration value is outside its valid domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value encountered at sampler step {step}")]
    NonFiniteState { step: usize },

    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged { step: usize, loss: f64 },

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    /// One or more verification invariants failed; the payload names them.
    #[error("invariant check failed: {0}")]
    InvariantFailed(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// `2` configuration / argument errors, `3` failed invariants or numerical
    /// breakdown, `4` file-system and format errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::DimensionMismatch { .. } => 2,
            Error::InvariantFailed(_)
            | Error::NonFiniteState { .. }
            | Error::Diverged { .. }
            | Error::SingularCovariance(_) => 3,
            Error::Io { .. } | Error::Malformed { .. } | Error::UnsupportedFormat(_) => 4,
        }
    }
}
