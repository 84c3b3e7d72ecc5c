//! Error type shared by every stage of the library.

use std::io;

use thiserror::Error;

/// Errors produced by the scar quantification library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed file content (bad magic, bad header fields).
    #[error("format error: {0}")]
    Format(String),

    /// A well-formed input that uses a feature we do not handle.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Payload shorter than the header promises.
    #[error("length error: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    /// A value does not fit the requested representation.
    #[error("range error: {0}")]
    Range(String),

    /// Grids or masks whose shapes disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Input that makes the operation undefined (constant slice, empty mask, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A caller-supplied argument outside the operation's domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Invalid pipeline or tool configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("missing: {0}")]
    Missing(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
