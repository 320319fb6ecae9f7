//! Domain records shared by every pipeline stage.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::LanguageCode;

/// Literal text recorded when a provider blocks generation.
pub const NO_ANSWER: &str = "No answer";

/// A language-agnostic prompt and its per-language realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractPrompt {
    pub prompt_id: String,
    #[serde(default)]
    pub category: String,
    pub realizations: BTreeMap<LanguageCode, String>,
}

impl AbstractPrompt {
    pub fn realization(&self, language: &LanguageCode) -> Option<&str> {
        self.realizations.get(language).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    Refused,
    RecitationSentinel,
    Error,
}

impl ResponseStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ResponseStatus::Ok => "ok",
            ResponseStatus::Refused => "refused",
            ResponseStatus::RecitationSentinel => "recitation_sentinel",
            ResponseStatus::Error => "error",
        }
    }
}

/// One model's response to one prompt realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub prompt_id: String,
    pub model_id: String,
    pub language: LanguageCode,
    pub text: String,
    pub status: ResponseStatus,
    pub created_at: DateTime<Utc>,
    /// Provider error category or message for non-ok statuses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ModelResponse {
    pub fn ok(
        prompt_id: impl Into<String>,
        model_id: impl Into<String>,
        language: LanguageCode,
        text: impl Into<String>,
    ) -> Result<Self> {
        let response = Self {
            prompt_id: prompt_id.into(),
            model_id: model_id.into(),
            language,
            text: text.into(),
            status: ResponseStatus::Ok,
            created_at: Utc::now(),
            detail: None,
        };
        response.validate()?;
        Ok(response)
    }

    pub fn recitation_sentinel(
        prompt_id: impl Into<String>,
        model_id: impl Into<String>,
        language: LanguageCode,
        category: impl Into<String>,
    ) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            model_id: model_id.into(),
            language,
            text: NO_ANSWER.to_string(),
            status: ResponseStatus::RecitationSentinel,
            created_at: Utc::now(),
            detail: Some(category.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.status {
            ResponseStatus::RecitationSentinel if self.text != NO_ANSWER => Err(
                Error::InvalidRecord(format!(
                    "{}/{}/{}: sentinel response must read {NO_ANSWER:?}",
                    self.model_id, self.language, self.prompt_id
                )),
            ),
            ResponseStatus::Ok if self.text.trim().is_empty() => {
                Err(Error::InvalidRecord(format!(
                    "{}/{}/{}: ok response with empty text",
                    self.model_id, self.language, self.prompt_id
                )))
            }
            _ => Ok(()),
        }
    }
}

/// How a translated sentence was decoded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Sampled { temperature: f64, top_p: f64 },
}

impl DecodeMode {
    /// Sampling parameters used when a greedy translation degenerates.
    pub const RETRY: DecodeMode = DecodeMode::Sampled {
        temperature: 0.7,
        top_p: 0.95,
    };

    pub fn is_sampled(&self) -> bool {
        matches!(self, DecodeMode::Sampled { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceTranslation {
    pub source: String,
    pub translated: String,
    pub decode_mode: DecodeMode,
}

/// A response translated into English sentence by sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatedResponse {
    pub prompt_id: String,
    pub model_id: String,
    pub language: LanguageCode,
    pub source_status: ResponseStatus,
    pub text_en: String,
    pub per_sentence: Vec<SentenceTranslation>,
    /// Indices of sentences that were still degenerate after the sampled retry.
    pub degeneration_flags: Vec<usize>,
}

/// A compatibility score in `[0, 1]` from one evaluator on one text pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorScore {
    pub value: f64,
    pub evaluator_id: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub detail: serde_json::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl EvaluatorScore {
    pub fn new(evaluator_id: impl Into<String>, value: f64) -> Self {
        Self {
            value,
            evaluator_id: evaluator_id.into(),
            detail: serde_json::Value::Null,
            flags: Vec::new(),
        }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn with_flag(mut self, flag: impl Into<String>) -> Self {
        let flag = flag.into();
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
        }
        self
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}

/// Consistency of one model in one language under one evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub model_id: String,
    pub language: LanguageCode,
    pub evaluator_id: String,
    pub value: f64,
    pub n_prompts: usize,
    pub per_prompt: BTreeMap<String, EvaluatorScore>,
}
