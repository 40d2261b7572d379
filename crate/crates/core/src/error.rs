use std::io;

use thiserror::Error;

/// Errors produced anywhere in the planning pipeline, simulator and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("horizon error: {0}")]
    Horizon(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("decode error at byte offset {offset}: {reason}")]
    Decode { offset: usize, reason: String },

    #[error("scenario generation failed for seed {seed}: {reason}")]
    Generation { seed: u64, reason: String },

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    /// Process exit code for the error class, used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Shape(_) => 3,
            Error::Horizon(_) => 4,
            Error::Protocol(_) => 5,
            Error::Decode { .. } => 6,
            Error::Generation { .. } => 7,
            Error::Io(_) => 8,
            Error::Serde(_) => 9,
        }
    }

    pub(crate) fn decode(offset: usize, reason: impl Into<String>) -> Self {
        Error::Decode {
            offset,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
