use std::path::PathBuf;

use bcenhance_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The caller supplied an unusable signal or file (e.g. wrong sample rate).
    #[error("input error: {0}")]
    Input(String),
    /// The data violates a precondition (empty corpus, degenerate statistics, ...).
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        Self::Format {
            kind,
            reason: reason.into(),
        }
    }
}

impl Error {
    /// Process exit status for this error: 2 for bad input or configuration,
    /// 3 for data and file problems, 4 for numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) | Self::Config(_) => 2,
            Self::Nn(NnError::Config { .. } | NnError::Usage(_)) => 2,
            Self::Data(_)
            | Self::Format { .. }
            | Self::Io { .. }
            | Self::Nn(NnError::Dimension { .. }) => 3,
            Self::Numeric(_) => 4,
        }
    }
}
