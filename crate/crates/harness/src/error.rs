use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Invariant(_) => 3,
            HarnessError::Io { .. } => 4,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Parameter errors from the core are configuration problems; everything else
/// is a violated invariant.
impl From<sembind::Error> for HarnessError {
    fn from(e: sembind::Error) -> Self {
        match e {
            sembind::Error::InvalidParameter { .. } | sembind::Error::UnreachableThreshold { .. } => {
                HarnessError::Config(e.to_string())
            }
            sembind::Error::Io(source) => HarnessError::Io {
                path: PathBuf::new(),
                source,
            },
            other => HarnessError::Invariant(other.to_string()),
        }
    }
}
