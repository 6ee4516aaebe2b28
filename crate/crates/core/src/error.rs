use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("structural mismatch: {0}")]
    Mismatch(String),

    #[error("ground state did not converge after {steps} steps (residual {residual:.3e})")]
    NoConvergence { steps: usize, residual: f64 },

    #[error("propagation unstable at step {step}: norm {norm:.12} exceeds 1 (dt = {dt} au, dx = {dx} bohr)")]
    Unstable {
        step: usize,
        norm: f64,
        dt: f64,
        dx: f64,
    },

    #[error("exponent |t1 + t2| = {0:.3e} exceeds the overflow guard")]
    Overflow(f64),

    #[error("propagation for amplitude {alpha} failed: {source}")]
    Node {
        alpha: String,
        #[source]
        source: Box<Error>,
    },

    #[error("manifest does not match plan: {0}")]
    HashMismatch(String),

    #[error("corrupt cache record {path}: {reason}")]
    CorruptRecord { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        Error::Mismatch(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
