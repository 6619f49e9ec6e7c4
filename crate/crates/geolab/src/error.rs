//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A line-oriented input file had a malformed record.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An invariant or precondition check failed.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A backend replied with something outside its wire contract.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A remote backend could not be reached or answered with a failure.
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },

    #[error("not found: {0}")]
    NotFound(String),

    /// The controlled environment could not satisfy a protocol requirement
    /// (e.g. too few organic results to fill a round).
    #[error("environment error: {0}")]
    Environment(String),

    /// An action violated an interaction contract (e.g. crawling a link that
    /// was never observed).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Page generation failed for a specific role.
    #[error("page generation failed for role {role}: {message}")]
    Generation { role: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    /// A trajectory log or other artifact is internally inconsistent.
    #[error("data error: {0}")]
    Data(String),
}

impl Error {
    /// Whether retrying the same call may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport { retryable: true, .. })
    }

    pub fn transport(message: impl Into<String>, retryable: bool) -> Self {
        Error::Transport {
            message: message.into(),
            retryable,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
