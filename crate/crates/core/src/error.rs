use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: header declares {expected} elements, payload holds {found}")]
    Length { expected: usize, found: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("missing resource for session {session}, utterance {utterance}: {path}")]
    MissingResource {
        session: String,
        utterance: String,
        path: PathBuf,
    },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("insufficient input: {0}")]
    InsufficientInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate similarity: {0}")]
    DegenerateSimilarity(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("cannot balance classes: {0}")]
    Balance(String),

    #[error("cannot pool an empty set of vectors")]
    EmptyPool,

    #[error("fusion error: {0}")]
    Fusion(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("degenerate document: {0}")]
    DegenerateDocument(String),

    #[error("no dense-vector row for sentence {0}")]
    MissingRow(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
