use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An on-disk artifact is malformed; `offset` is the byte position at
    /// which the problem was detected.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// Shapes of two artifacts (or an artifact and a dataset) disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A sampling distribution or training set degenerated (empty subset,
    /// round(alpha*d) in {0, d}, ...).
    #[error("degenerate: {0}")]
    Degenerate(String),

    /// diff-of-means influence is undefined for indices that were never
    /// included or never excluded.
    #[error("influence undefined for {side} indices {indices:?}")]
    UndefinedCoordinate { side: &'static str, indices: Vec<usize> },

    /// A solver hit its iteration cap without meeting its tolerance.
    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { offset, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
