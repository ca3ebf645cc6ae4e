use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = BackendError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid backend config: {0}")]
    Config(String),

    #[error("no fixture for sample `{sample_id}` / model `{model_name}` at {}", path.display())]
    FixtureMiss {
        sample_id: String,
        model_name: String,
        path: PathBuf,
    },

    #[error("malformed fixture {}: {message}", path.display())]
    BadFixture { path: PathBuf, message: String },

    #[error("`{model_name}` failed after {attempts} attempt(s): {message}")]
    Transport {
        model_name: String,
        attempts: u32,
        message: String,
    },

    #[error("`{model_name}` returned HTTP {status}: {body}")]
    Status {
        model_name: String,
        status: u16,
        body: String,
    },

    #[error("`{model_name}` sent an unusable response: {message}")]
    Protocol { model_name: String, message: String },

    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("only {succeeded} candidate(s) succeeded for sample `{sample_id}`, need at least 2")]
    InsufficientCandidates {
        sample_id: String,
        succeeded: usize,
        failures: Vec<crate::CandidateFailure>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
