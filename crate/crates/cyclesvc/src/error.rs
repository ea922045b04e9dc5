//! Error type shared across the crate.

use std::path::PathBuf;

/// Coarse error class used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad invocation, bad flags, malformed configuration.
    Usage,
    /// Missing, unreadable or inconsistent data.
    Data,
    /// A computation produced non-finite values or diverged.
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty clip")]
    EmptyClip,

    #[error("clip too short: need at least {need} samples, got {got}")]
    ClipTooShort { need: usize, got: usize },

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("{what} out of range: {msg}")]
    OutOfRange { what: &'static str, msg: String },

    #[error("unknown speaker: {0}")]
    UnknownSpeaker(String),

    #[error("no voiced frames in {0}")]
    NoVoicedFrames(&'static str),

    #[error("no frames voiced in both clips")]
    NoCommonVoicedFrames,

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("{path}:{line}: {msg}")]
    ConfigParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("missing config key: {0}")]
    ConfigMissing(String),

    #[error("corrupt file {path}: {msg}")]
    Corrupt { path: PathBuf, msg: String },

    #[error("non-finite value in {what}{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    NonFinite {
        what: &'static str,
        context: Option<String>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Map the error onto the documented exit-code classes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::ConfigParse { .. } | Error::ConfigMissing(_) | Error::InvalidArgument(_) => {
                ErrorClass::Usage
            }
            Error::NonFinite { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn non_finite(what: &'static str) -> Self {
        Error::NonFinite {
            what,
            context: None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
