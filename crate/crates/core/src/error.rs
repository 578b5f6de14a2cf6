//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures surfaced by learners, adversaries, audits and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An input is outside its mathematical domain (shape mismatch, value out of range).
    #[error("domain error: {0}")]
    Domain(String),

    /// An object is in a state where the operation is undefined (e.g. an empty mixture).
    #[error("state error: {0}")]
    State(String),

    /// A configuration or precondition check failed before any work was done.
    #[error("configuration error: {0}")]
    Config(String),

    /// A supplied witness (clean index set, budget claim) does not hold.
    #[error("witness error: {0}")]
    Witness(String),

    /// A weighting with no mass was handed to a sampler.
    #[error("degenerate weighting: {0}")]
    Degenerate(String),

    /// An iterative procedure ran out of its budget. Carries the per-iteration trace.
    #[error("budget exceeded after {iterations} iterations: {detail}")]
    Budget {
        iterations: usize,
        detail: String,
        trace: Vec<f64>,
    },

    /// Malformed input file.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn ensure_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(domain(format!("{what}: length {got}, expected {want}")))
    }
}
