//! Library-wide error type.

/// Errors produced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Arguments violate a documented precondition (dimension mismatch,
    /// empty input, out-of-range parameter, non-finite data).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// File contents do not match the expected layout.
    #[error("format error: {0}")]
    Format(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// PNG codec failure.
    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
