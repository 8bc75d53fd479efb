use thiserror::Error;

/// Errors produced by the analysis, codec, source-coding and learning layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// The requested transmission cannot be carried out on this channel.
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("decode error: {0}")]
    Decode(String),
    #[error("insufficient trials: need at least {needed}, got {got}")]
    InsufficientTrials { needed: usize, got: usize },
    #[error("dataset error: {0}")]
    Dataset(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn infeasible(msg: impl Into<String>) -> Error {
    Error::Infeasible(msg.into())
}
