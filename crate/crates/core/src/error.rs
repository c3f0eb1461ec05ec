use thiserror::Error;

use crate::config::ConfigError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} is not a grid node (dt = {dt})")]
    Alignment { t: f64, dt: f64 },

    #[error("segment window at t = {t} would start before -r0")]
    WindowUnderflow { t: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("index {index} out of range 0..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("ensemble size {n} exceeds exact solver cap {cap}; use the entropic solver")]
    Capacity { n: usize, cap: usize },

    #[error("sinkhorn did not converge in {iterations} iterations (marginal gap {gap:e})")]
    Convergence { iterations: usize, gap: f64 },

    #[error("non-finite state at step {step}{}", particle.map(|p| format!(" (particle {p})")).unwrap_or_default())]
    Divergence { step: usize, particle: Option<usize> },

    #[error("horizon too long for the method-of-steps oracle: T = {horizon}, limit {limit}")]
    HorizonTooLong { horizon: f64, limit: f64 },

    #[error("configuration errors:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigError>),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
