use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Backend(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EvalError {
    /// 1 usage/config, 2 data validation, 3 backend failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            EvalError::Usage(_) | EvalError::Io { .. } => 1,
            EvalError::Data(_) => 2,
            EvalError::Backend(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| EvalError::Io { path, source }
    }
}

impl From<ce_core::CeError> for EvalError {
    fn from(e: ce_core::CeError) -> Self {
        EvalError::Data(e.to_string())
    }
}

impl From<ce_backends::BackendError> for EvalError {
    fn from(e: ce_backends::BackendError) -> Self {
        match e {
            ce_backends::BackendError::Config(_) => EvalError::Usage(e.to_string()),
            _ => EvalError::Backend(e.to_string()),
        }
    }
}
