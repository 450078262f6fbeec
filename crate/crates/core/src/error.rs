use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SafeError>;

#[derive(Debug, Error)]
pub enum SafeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("cannot normalize a zero-norm vector")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("non-finite loss: {0}")]
    NonFinite(String),

    #[error("patch {patch_id}: no embedding from model {model}")]
    MissingEmbedding { patch_id: String, model: usize },
}

impl SafeError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SafeError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            SafeError::InvalidArgument(_) => 2,
            SafeError::Io { .. } => 3,
            SafeError::Parse { .. } | SafeError::Format(_) => 4,
            SafeError::Validation(_) | SafeError::Precondition(_) => 5,
            SafeError::ArchitectureMismatch(_) => 6,
            SafeError::NonFinite(_) => 7,
            SafeError::ZeroVector
            | SafeError::DimensionMismatch { .. }
            | SafeError::MissingEmbedding { .. } => 8,
        }
    }
}
