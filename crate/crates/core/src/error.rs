use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite opinion value {0}")]
    NonFinite(f64),

    #[error("agent {agent} is not in the communicating set")]
    NotCommunicating { agent: usize },

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid communication rule: {0}")]
    InvalidRule(String),

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("invalid inertia policy: {0}")]
    InvalidInertia(String),

    #[error("invalid step inputs: {0}")]
    InvalidInputs(String),

    #[error("L search exceeded the cap of {cap} iterations (1 - p^L0 = {base:e})")]
    SearchCap { cap: u64, base: f64 },

    #[error("ensemble error: {0}")]
    Ensemble(String),

    #[error("infeasible verification options: {0}")]
    Infeasible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("plot error: {0}")]
    Plot(String),

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
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
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
