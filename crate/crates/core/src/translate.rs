//! Sentence-by-sentence translation into English with a degeneration check,
//! plus the back-translation self-consistency check.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cache::{content_hash, ResponseCache};
use crate::consistency::{aggregate, evaluate_pair, Evaluator};
use crate::degeneration::DegenerationConfig;
use crate::error::{Error, Result};
use crate::lang::LanguageCode;
use crate::segment::{default_segmenters, SegmenterRegistry};
use crate::transport::{JsonTransport, RetryPolicy, TransportError};
use crate::types::{
    ConsistencyResult, DecodeMode, ModelResponse, SentenceTranslation, TranslatedResponse,
};

pub trait TranslationClient: Send + Sync {
    fn id(&self) -> &str;

    fn translate(
        &self,
        sentence: &str,
        source: &LanguageCode,
        target: &LanguageCode,
        decode: DecodeMode,
    ) -> Result<String, TransportError>;
}

/// Returns its input unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityClient;

impl TranslationClient for IdentityClient {
    fn id(&self) -> &str {
        "identity"
    }

    fn translate(
        &self,
        sentence: &str,
        _source: &LanguageCode,
        _target: &LanguageCode,
        _decode: DecodeMode,
    ) -> Result<String, TransportError> {
        Ok(sentence.to_string())
    }
}

/// Request body of the translation wire contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRequest {
    pub text: String,
    pub src: LanguageCode,
    pub tgt: LanguageCode,
    /// `"greedy"` or `"sampled"`.
    pub decode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
}

impl TranslationRequest {
    pub fn new(text: &str, src: &LanguageCode, tgt: &LanguageCode, decode: DecodeMode) -> Self {
        let (mode, temperature, top_p) = match decode {
            DecodeMode::Greedy => ("greedy", None, None),
            DecodeMode::Sampled { temperature, top_p } => ("sampled", Some(temperature), Some(top_p)),
        };
        Self {
            text: text.to_string(),
            src: src.clone(),
            tgt: tgt.clone(),
            decode: mode.to_string(),
            temperature,
            top_p,
        }
    }
}

/// Client for `{text, src, tgt, decode, temperature?, top_p?}` → `{text}`.
/// Every reply is cached under the content hash of its request.
pub struct HttpTranslationClient {
    id: String,
    endpoint: String,
    transport: Arc<dyn JsonTransport>,
    retry: RetryPolicy,
    cache: Arc<ResponseCache>,
}

impl HttpTranslationClient {
    pub fn new(endpoint: impl Into<String>, transport: Arc<dyn JsonTransport>) -> Self {
        let endpoint = endpoint.into();
        Self {
            id: format!("http:{endpoint}"),
            endpoint,
            transport,
            retry: RetryPolicy::default(),
            cache: Arc::new(ResponseCache::in_memory()),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

impl TranslationClient for HttpTranslationClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate(
        &self,
        sentence: &str,
        source: &LanguageCode,
        target: &LanguageCode,
        decode: DecodeMode,
    ) -> Result<String, TransportError> {
        let request = TranslationRequest::new(sentence, source, target, decode);
        let key = content_hash(&request).map_err(|e| TransportError::Decode(e.to_string()))?;
        let reply = match self.cache.get(&key) {
            Some(hit) => hit,
            None => {
                let body = serde_json::to_value(&request)
                    .map_err(|e| TransportError::Decode(e.to_string()))?;
                let reply = self.retry.run(
                    |_| self.transport.post_json(&self.endpoint, &body),
                    TransportError::is_retryable,
                )?;
                reply_text(&reply)?;
                self.cache
                    .insert(&key, &reply)
                    .map_err(|e| TransportError::Io(e.to_string()))?;
                reply
            }
        };
        reply_text(&reply)
    }
}

fn reply_text(reply: &Value) -> Result<String, TransportError> {
    reply
        .get("text")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| TransportError::Decode(format!("missing text field: {reply}")))
}

/// Result of translating one text.
#[derive(Debug, Clone, PartialEq)]
pub struct TextTranslation {
    pub text: String,
    pub per_sentence: Vec<SentenceTranslation>,
    pub degeneration_flags: Vec<usize>,
}

/// Bundles a client with segmentation rules and degeneration thresholds.
pub struct Translator<'a> {
    pub client: &'a dyn TranslationClient,
    pub segmenters: &'a SegmenterRegistry,
    pub degeneration: DegenerationConfig,
}

impl<'a> Translator<'a> {
    pub fn new(client: &'a dyn TranslationClient) -> Self {
        Self {
            client,
            segmenters: default_segmenters(),
            degeneration: DegenerationConfig::default(),
        }
    }

    /// Translates sentence by sentence. Each sentence is decoded greedily;
    /// when that output is degenerate it is re-translated once with
    /// [`DecodeMode::RETRY`] and the sampled output is kept. Sentences still
    /// degenerate after the retry are listed in `degeneration_flags`.
    ///
    /// The output joins non-empty translated sentences with single spaces.
    pub fn translate_text(
        &self,
        text: &str,
        source: &LanguageCode,
        target: &LanguageCode,
    ) -> Result<TextTranslation> {
        let sentences = self.segmenters.segment(text, source)?;
        let mut per_sentence = Vec::with_capacity(sentences.len());
        let mut degeneration_flags = Vec::new();
        for (index, sentence) in sentences.into_iter().enumerate() {
            let wrap = |source| Error::Translation {
                sentence_index: index,
                source,
            };
            let mut decode_mode = DecodeMode::Greedy;
            let mut translated = self
                .client
                .translate(&sentence, source, target, decode_mode)
                .map_err(wrap)?;
            if self.degeneration.detect(&translated).degenerate {
                decode_mode = DecodeMode::RETRY;
                translated = self
                    .client
                    .translate(&sentence, source, target, decode_mode)
                    .map_err(wrap)?;
                if self.degeneration.detect(&translated).degenerate {
                    log::warn!("sentence {index} still degenerate after sampled retry");
                    degeneration_flags.push(index);
                }
            }
            per_sentence.push(SentenceTranslation {
                source: sentence,
                translated,
                decode_mode,
            });
        }
        let text = per_sentence
            .iter()
            .map(|s| s.translated.trim())
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        Ok(TextTranslation {
            text,
            per_sentence,
            degeneration_flags,
        })
    }

    pub fn translate_response(&self, response: &ModelResponse) -> Result<TranslatedResponse> {
        if response.language.is_english() {
            return Err(Error::AlreadyEnglish);
        }
        let t = self.translate_text(&response.text, &response.language, &LanguageCode::english())?;
        Ok(TranslatedResponse {
            prompt_id: response.prompt_id.clone(),
            model_id: response.model_id.clone(),
            language: response.language.clone(),
            source_status: response.status,
            text_en: t.text,
            per_sentence: t.per_sentence,
            degeneration_flags: t.degeneration_flags,
        })
    }
}

/// Translates a non-English response into English with default rules.
pub fn translate_response(
    response: &ModelResponse,
    client: &dyn TranslationClient,
) -> Result<TranslatedResponse> {
    Translator::new(client).translate_response(response)
}

/// Round-trips English texts through `language` with the same client and
/// scores each original against its round trip.
pub fn back_translation_self_check(
    english_responses: &[String],
    language: &LanguageCode,
    client: &dyn TranslationClient,
    evaluator: &dyn Evaluator,
) -> Result<ConsistencyResult> {
    Translator::new(client).self_check(english_responses, language, evaluator)
}

impl Translator<'_> {
    pub fn self_check(
        &self,
        english_responses: &[String],
        language: &LanguageCode,
        evaluator: &dyn Evaluator,
    ) -> Result<ConsistencyResult> {
        let en = LanguageCode::english();
        let width = english_responses.len().to_string().len().max(4);
        let mut per_prompt = BTreeMap::new();
        for (i, original) in english_responses.iter().enumerate() {
            let prompt_id = format!("bt-{i:0width$}");
            let round_trip = (|| -> Result<(TextTranslation, TextTranslation)> {
                let forward = self.translate_text(original, &en, language)?;
                let back = self.translate_text(&forward.text, language, &en)?;
                Ok((forward, back))
            })()
            .map_err(|e| e.for_prompt(&prompt_id))?;
            let (forward, back) = round_trip;
            let mut score = evaluate_pair(evaluator, original, &back.text)
                .map_err(|e| e.for_prompt(&prompt_id))?;
            if let Value::Object(map) = &mut score.detail {
                map.insert("round_trip".into(), json!(back.text));
            }
            if !forward.degeneration_flags.is_empty() || !back.degeneration_flags.is_empty() {
                score = score.with_flag("degenerate_translation");
            }
            per_prompt.insert(prompt_id, score);
        }
        aggregate(
            &format!("selfcheck:{}", self.client.id()),
            language,
            evaluator.id(),
            per_prompt,
        )
    }
}
