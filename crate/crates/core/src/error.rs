use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("lexicon row {row}: {message}")]
    LexiconRow { row: usize, message: String },

    #[error("lexicon is empty after applying threshold {0}")]
    EmptyLexicon(f64),

    #[error("record {line} of {path}: {message}")]
    Record { path: String, line: usize, message: String },

    #[error("invalid span layout: {0}")]
    SpanLayout(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("need at least 2 sentences to split off a dev set, got {0}")]
    TooFewSentences(usize),

    #[error("tagger protocol error during {stage}: {message}")]
    Protocol { stage: String, message: String },

    #[error("prediction/gold mismatch: {0}")]
    Alignment(String),

    #[error("seeds cover different domain sets: {0}")]
    DomainMismatch(String),

    #[error("vocabulary collision: {0}")]
    VocabularyCollision(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn protocol(stage: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Protocol {
            stage: stage.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
