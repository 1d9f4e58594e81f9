use std::path::PathBuf;

use unagan_core::Error as CoreError;

/// Errors of the pipeline. Each maps onto one process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Wav { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_CHECKPOINT: u8 = 4;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Core(CoreError::TrainingDiverged { .. }) => EXIT_DIVERGED,
            Self::Core(CoreError::Checkpoint(_)) => EXIT_CHECKPOINT,
            _ => EXIT_INPUT,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Core(CoreError::InvalidInput(msg.into()))
}
