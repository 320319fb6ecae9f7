//! Cross-lingual consistency of LLM responses: collect responses per
//! language, translate them into English sentence by sentence, score each
//! against the English response with an English-only evaluator, and
//! aggregate the scores by language group.

pub mod cache;
pub mod cli;
pub mod collect;
pub mod config;
pub mod consistency;
pub mod degeneration;
pub mod empathy;
pub mod error;
pub mod generation;
pub mod heuristic;
pub mod info;
pub mod judge;
pub mod lang;
pub mod parallel;
pub mod pipeline;
pub mod registry;
pub mod report;
pub mod segment;
pub mod store;
pub mod tokenize;
pub mod transport;
pub mod translate;
pub mod types;

pub use consistency::{consistency, evaluate_pair, f_score, Evaluator, ScoringPair};
pub use error::{BackendError, Error, Result};
pub use lang::LanguageCode;
pub use types::{
    AbstractPrompt, ConsistencyResult, DecodeMode, EvaluatorScore, ModelResponse, ResponseStatus,
    TranslatedResponse, NO_ANSWER,
};
