use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("distribution truncated: tail mass {tail:.3e} exceeds {limit:.1e}")]
    Truncation { tail: f64, limit: f64 },

    #[error("matrix is not unitary: max deviation {deviation:.3e}")]
    NotUnitary { deviation: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("basis dimension {size} exceeds cap {cap}")]
    BasisOverflow { size: usize, cap: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("dataset must contain both classes: {0}")]
    SingleClass(String),

    #[error("witness not applicable: {0}")]
    NotApplicable(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
