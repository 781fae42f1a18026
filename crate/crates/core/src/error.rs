use std::io;

use thiserror::Error;

/// Errors produced by the processing library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("signal length {0} is too short (minimum {1})")]
    TooShort(usize, usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("eigenbasis construction failed: {0}")]
    Eigen(String),
    #[error("degenerate fractional angle {0} rad")]
    DegenerateAngle(f64),
    #[error("search mask admits no cell")]
    EmptyMask,
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
