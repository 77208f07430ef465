use std::io;

use thiserror::Error;

/// Errors produced by quantization, estimation, index and dataset operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// An internal consistency check failed. Indicates a bug, not bad input.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// Malformed vector file; `offset` is the byte offset of the offending record.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("not an index file (magic {found:?})")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported index format version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },

    #[error("index checksum mismatch (stored {stored:#018x}, computed {computed:#018x})")]
    Checksum { stored: u64, computed: u64 },

    /// The file passed its checksum but its sections are inconsistent.
    #[error("corrupt index: {0}")]
    Corrupt(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_len(what: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(invalid(format!("{what}: expected length {expected}, got {actual}")));
    }
    Ok(())
}
