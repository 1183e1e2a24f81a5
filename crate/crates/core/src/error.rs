use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected} bits, got {actual}")]
    Length { expected: usize, actual: usize },

    #[error(
        "insufficient capacity: {required} blocks required per channel, {available} available"
    )]
    Capacity { required: usize, available: usize },

    #[error("bin ({row}, {col}) is its own conjugate mirror and cannot be modulated")]
    SelfConjugate { row: usize, col: usize },

    #[error("residual imaginary part {residual:e} exceeds {limit:e}; Hermitian symmetry was not restored")]
    SymmetryViolation { residual: f64, limit: f64 },

    #[error("no match count reaches significance {alpha:e} with {bits} bits")]
    ThresholdUnreachable { bits: usize, alpha: f64 },

    #[error("attack {attack} cannot be applied to a {kind}")]
    KindMismatch { attack: String, kind: &'static str },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
