//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the domain of the requested distribution or
    /// operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data violates a structural requirement (asymmetry, self-loops,
    /// missing pairs, shape mismatches).
    #[error("invalid data: {0}")]
    Data(String),

    /// An internal invariant that should hold by construction was violated;
    /// indicates a bug or numerically degenerate state.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// Configuration rejected before any sampling was attempted.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("chain file error: {0}")]
    Chain(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
