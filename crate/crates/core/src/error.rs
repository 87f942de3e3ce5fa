use std::io;

use thiserror::Error;

/// Reasons a `TemplateFile` byte stream is rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("bad magic: expected \"IRTC\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated payload while reading {0}")]
    Truncated(&'static str),
    #[error("zero-sized dimension: {0} must be positive")]
    ZeroDimension(&'static str),
    #[error("{0} is not valid UTF-8")]
    InvalidUtf8(&'static str),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("template format error: {0}")]
    Format(#[from] FormatError),
    #[error("parse error: {0}")]
    Parse(String),
    /// A precondition on the inputs was violated (dimension mismatch,
    /// empty gallery, duplicate identity, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    /// The quantity asked for is mathematically undefined for the input.
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
