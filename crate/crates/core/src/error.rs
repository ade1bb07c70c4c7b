use std::io;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Integer arithmetic left the representable range.
    #[error("range error: {0}")]
    Range(String),
    /// A parameter was outside the domain of an operator.
    #[error("domain error: {0}")]
    Domain(String),
    /// Tensor shapes did not line up.
    #[error("shape error: {0}")]
    Shape(String),
    /// An operation would produce an empty result.
    #[error("empty result: {0}")]
    Empty(String),
    /// A caller broke the documented contract of an operation.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A file did not follow its format.
    #[error("format error: {0}")]
    Format(String),
    /// Checkpoint integrity check failed.
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    /// Invalid configuration key or value.
    #[error("config error: {0}")]
    Config(String),
    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
