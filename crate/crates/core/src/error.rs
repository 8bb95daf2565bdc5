use std::path::PathBuf;

use thiserror::Error;

use crate::ingest::Stage;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{}line {line}: {message}", path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },

    #[error("trace is at stage {found:?}, expected {expected:?}")]
    Stage { expected: Stage, found: Stage },

    #[error("degenerate beat: {0}")]
    DegenerateBeat(String),

    #[error("feature selection produced an empty feature set")]
    SelectionEmpty,

    #[error("model file: {0}")]
    Model(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            line,
            message: message.into(),
        }
    }

    /// Attaches a file path to a parse error; other variants pass through.
    pub fn with_path(self, p: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse { line, message, .. } => Error::Parse {
                path: Some(p.into()),
                line,
                message,
            },
            other => other,
        }
    }
}
