use thiserror::Error;

/// Crate-wide error type. Every variant renders with a stable category
/// prefix (`config:`, `parse:`, ...) so callers and scripts can match on it.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad or inconsistent configuration (unknown key, missing file, ...).
    #[error("config: {0}")]
    Config(String),
    /// A value violates a documented domain invariant.
    #[error("validation: {0}")]
    Validation(String),
    /// Malformed text input; carries the 1-based line number.
    #[error("parse: line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// Vector/matrix dimensions do not line up.
    #[error("shape: {0}")]
    Shape(String),
    /// Non-finite value where a finite one is required.
    #[error("numeric: {0}")]
    Numeric(String),
    /// API called in a state that does not permit it.
    #[error("usage: {0}")]
    Usage(String),
    /// Internal contract breach between modules (indicates a bug upstream).
    #[error("contract: {0}")]
    Contract(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serde: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
