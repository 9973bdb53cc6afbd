use std::path::PathBuf;

use stempush_nn::NnError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("streams cannot be synchronized: {0}")]
    Unsynchronizable(String),

    #[error("integration diverged at t = {time:.6} s: `{field}` is not finite")]
    Diverged { field: String, time: f64 },

    #[error("controller returned a non-finite command at control tick {tick}")]
    NonFiniteCommand { tick: usize },

    #[error("training failed ({detail}); last finite loss {last_finite_loss:e}")]
    TrainingFailed { detail: String, last_finite_loss: f64 },

    #[error("model not ready: {0}")]
    ModelNotReady(String),

    #[error("no contact visible in the tactile frame")]
    NoContact,

    #[error("context buffer holds {have} samples, {need} required")]
    InsufficientContext { have: usize, need: usize },

    #[error("metrics undefined: {0}")]
    MetricsUndefined(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Nn(#[from] NnError),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. } | Error::Config(_) | Error::Unsynchronizable(_)
        )
    }
}

/// Fails with a validation error unless `cond` holds.
pub(crate) fn ensure(cond: bool, field: &str, message: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::validation(field, message()))
    }
}
