use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ingestion error in {doc}: {message}")]
    Ingest { doc: String, message: String },

    #[error("invalid UTF-8 in {doc} at byte offset {offset}")]
    Encoding { doc: String, offset: usize },

    #[error("lexicon error: {0}")]
    Lexicon(String),

    #[error("vocabulary error: {0}")]
    Vocab(String),

    #[error("malformed word pieces: {0}")]
    Pieces(String),

    #[error("dataset build error: {0}")]
    Build(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("training error: non-finite gradient in {0}")]
    NonFinite(String),

    #[error("attribution error: {0}")]
    Attribution(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("vocabulary hash mismatch: checkpoint expects {expected}, got {actual}")]
    VocabMismatch { expected: String, actual: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Ingest { .. } | Error::Encoding { .. } => "ingest",
            Error::Lexicon(_) => "lexicon",
            Error::Vocab(_) | Error::VocabMismatch { .. } => "vocab",
            Error::Pieces(_) => "pieces",
            Error::Build(_) => "build",
            Error::Parse { .. } | Error::Json(_) => "parse",
            Error::Config(_) => "config",
            Error::Input(_) => "input",
            Error::NonFinite(_) => "training",
            Error::Attribution(_) => "attribution",
            Error::Alignment(_) => "alignment",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }
}
