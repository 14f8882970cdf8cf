use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("sentence {sentence}: invalid BILOU sequence: {message}")]
    InvalidBilou { sentence: usize, message: String },

    #[error("sentence {sentence}: {message}")]
    InvalidRelation { sentence: usize, message: String },

    #[error("overlapping spans {first:?} and {second:?}")]
    OverlappingSpans {
        first: (usize, usize),
        second: (usize, usize),
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("pretrained vectors, line {line}: expected dimension {expected}, found {found}")]
    EmbeddingDim {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("parameter `{name}`: checkpoint has shape {found:?}, configuration expects {expected:?}")]
    ParamMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("non-finite loss at epoch {epoch}, sentence {sentence}")]
    Divergence { epoch: usize, sentence: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
