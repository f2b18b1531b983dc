use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("anchor {anchor} has no positive in the batch")]
    EmptyPositives { anchor: usize },

    #[error("scheme {0} requires a message")]
    MissingMessage(&'static str),

    #[error("undetectable at n = {n}: no threshold reaches fpr {fpr:e}")]
    UnreachableThreshold { n: u64, fpr: f64 },

    #[error("insufficient input: {0}")]
    Insufficient(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
