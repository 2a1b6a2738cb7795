//! Shared error type for the whole pipeline.

use thiserror::Error;

/// Errors surfaced by dataset handling, training, and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or inconsistent pipeline inputs.
    #[error("configuration error: {0}")]
    Config(String),

    /// A persisted artifact could not be parsed. `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Checkpoint header does not match the current policy space.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A training loss or parameter became non-finite.
    #[error("training diverged at step {step}: {message}")]
    Divergence { step: usize, message: String },

    /// An importance ratio was non-finite for the given rollout index.
    #[error("non-finite importance ratio in rollout {rollout}")]
    NumericGuard { rollout: usize },

    /// Run logs cannot be aggregated because their step grids differ.
    #[error("log alignment error: {0}")]
    Alignment(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
