use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("simulation diverged: non-finite state in {layer} neuron {neuron} at step {step}")]
    Diverged {
        layer: &'static str,
        neuron: usize,
        step: u64,
    },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("time moved backward: last update at {last} ms, requested {requested} ms")]
    TimeReversal { last: f64, requested: f64 },

    #[error("negative synaptic weight {0}")]
    NegativeWeight(f64),

    #[error("hard prune has already been applied to this network")]
    AlreadyHardPruned,

    #[error("no excitatory neuron responded during labeling; the network looks untrained")]
    Untrained,

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("malformed {what} at byte offset {offset}: {reason}")]
    Format {
        what: &'static str,
        offset: u64,
        reason: String,
    },

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image {path}: {reason}")]
    Image { path: PathBuf, reason: String },
}

/// Coarse fault classes, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultClass {
    Config,
    Data,
    Runtime,
}

impl Error {
    pub fn class(&self) -> FaultClass {
        match self {
            Error::InvalidParam { .. } | Error::Config { .. } => FaultClass::Config,
            Error::Format { .. } | Error::Io { .. } | Error::Image { .. } | Error::Empty(_) => {
                FaultClass::Data
            }
            _ => FaultClass::Runtime,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
