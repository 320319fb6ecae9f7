use std::path::PathBuf;

use thiserror::Error;

use crate::transport::TransportError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure raised by an evaluator backend (judge, classifier, metric).
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("generation: {0}")]
    Generation(#[from] crate::generation::GenerationError),
    #[error("could not parse backend output: {message} (raw output: {raw:?})")]
    Parse { message: String, raw: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown language code {0:?}")]
    InvalidLanguage(String),

    #[error("evaluator {evaluator_id:?} failed: {source}")]
    Evaluator {
        evaluator_id: String,
        #[source]
        source: BackendError,
    },

    #[error("unknown evaluator {0:?}")]
    UnknownEvaluator(String),

    #[error("no prompts to score")]
    NoPrompts,

    #[error("prompt {prompt_id:?}: {source}")]
    Prompt {
        prompt_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("value {value} for {what} is outside [0, 1]")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("empty reference sequence")]
    EmptyReference,

    #[error("n-gram order must be at least 1")]
    InvalidOrder,

    #[error("no sentence segmenter registered for {language:?} (registered: {registered})")]
    UnregisteredSegmenter { language: String, registered: String },

    #[error("translation of sentence {sentence_index} failed: {source}")]
    Translation {
        sentence_index: usize,
        #[source]
        source: TransportError,
    },

    #[error("cannot translate an English response to English")]
    AlreadyEnglish,

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("{path}:{line}: {message}")]
    PromptSet {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("prompt {prompt_id:?} has no realization for language {language}")]
    MissingRealization { prompt_id: String, language: String },

    #[error("missing translations: {0}")]
    MissingTranslations(String),

    #[error("missing responses: {0}")]
    MissingResponses(String),

    #[error("language {0} is not in any group of this grouping")]
    Ungrouped(String),

    #[error("reports mix evaluators: {0}")]
    MixedEvaluators(String),

    #[error("store: {0}")]
    Store(#[from] crate::store::StoreError),

    #[error("config: {0}")]
    Config(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("i/o error on {path}: {source}")]
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

    pub(crate) fn for_prompt(self, prompt_id: &str) -> Self {
        Error::Prompt {
            prompt_id: prompt_id.to_string(),
            source: Box::new(self),
        }
    }
}
