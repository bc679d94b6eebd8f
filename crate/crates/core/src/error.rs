use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown vector field family `{0}`")]
    UnknownField(String),

    #[error("ellipticity violated: {0}")]
    NotElliptic(String),

    #[error("Gram factorization failed (n = {n}, H = {hurst}) after jitter {jitter:e}")]
    Factorization { n: usize, hurst: f64, jitter: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate samples: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
