//! Empathy consistency: a three-bit profile (emotional reactions,
//! interpretations, explorations) per response, compared by exact match.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use crate::consistency::Evaluator;
use crate::error::BackendError;
use crate::segment::default_segmenters;
use crate::lang::LanguageCode;
use crate::tokenize::TokenSequence;
use crate::transport::{JsonTransport, RetryPolicy, TransportError};
use crate::types::{ConsistencyResult, EvaluatorScore};

pub const EMPATHY_EVALUATOR_ID: &str = "empathy_exact";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct EmpathyProfile {
    pub er: bool,
    pub ip: bool,
    pub ex: bool,
}

impl EmpathyProfile {
    pub fn new(er: bool, ip: bool, ex: bool) -> Self {
        Self { er, ip, ex }
    }

    pub fn bits(&self) -> [bool; 3] {
        [self.er, self.ip, self.ex]
    }

    /// Profile from the low three bits of `code`, ER being the highest.
    pub fn from_index(code: u8) -> Self {
        Self::new(code & 4 != 0, code & 2 != 0, code & 1 != 0)
    }

    /// Per-mechanism agreement with `other`.
    pub fn agreement(&self, other: &EmpathyProfile) -> [bool; 3] {
        let (a, b) = (self.bits(), other.bits());
        [a[0] == b[0], a[1] == b[1], a[2] == b[2]]
    }
}

#[derive(Serialize, Deserialize)]
struct WireProfile {
    er: u8,
    ip: u8,
    ex: u8,
}

impl TryFrom<WireProfile> for EmpathyProfile {
    type Error = String;

    fn try_from(w: WireProfile) -> Result<Self, Self::Error> {
        let bit = |v: u8, name: &str| match v {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(format!("{name} must be 0 or 1, got {other}")),
        };
        Ok(Self::new(bit(w.er, "er")?, bit(w.ip, "ip")?, bit(w.ex, "ex")?))
    }
}

impl Serialize for EmpathyProfile {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        WireProfile {
            er: self.er as u8,
            ip: self.ip as u8,
            ex: self.ex as u8,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EmpathyProfile {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        WireProfile::deserialize(d)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}

pub trait MechanismClassifierBackend: Send + Sync {
    fn classify(&self, text: &str) -> Result<EmpathyProfile, BackendError>;

    fn classify_batch(&self, texts: &[&str]) -> Result<Vec<EmpathyProfile>, BackendError> {
        texts.iter().map(|t| self.classify(t)).collect()
    }
}

const ER_CUES: &[&str] = &[
    "sorry", "so sorry", "heartbreaking", "heartbroken", "hugs", "sending love",
    "my heart goes out", "that's awful", "that's terrible", "how awful", "how terrible",
    "sad", "saddened", "i feel for you", "proud of you", "hope you feel better",
    "here for you", "i care about you", "sympathy", "condolences", "that's so hard",
    "that sucks", "glad you",
];

const IP_CUES: &[&str] = &[
    "i understand", "it sounds like", "sounds like", "i can imagine", "i know how",
    "must be", "must have been", "i've been there", "i have been there", "that makes sense",
    "i get it", "i hear you", "it seems like", "i can see why", "understandable",
    "i went through", "i know what it's like", "i know the feeling",
];

const EX_CUES: &[&str] = &[
    "tell me more", "what happened", "how do you feel", "how are you feeling",
    "how did that make you feel", "would you like to talk", "do you want to talk",
    "can you share", "could you share", "what's going on", "how long have you",
    "can you tell me", "could you tell me", "what do you mean", "i'm curious",
    "what made you",
];

const INTERROGATIVES: &[&str] = &[
    "what", "how", "why", "when", "where", "who", "which", "do", "does", "did", "are", "is",
    "have", "has", "can", "could", "would", "will",
];

/// Lexicon and punctuation cues for each mechanism; a mechanism is present
/// when any of its cues matches.
#[derive(Debug, Clone)]
pub struct RuleClassifier {
    er: Vec<Vec<String>>,
    ip: Vec<Vec<String>>,
    ex: Vec<Vec<String>>,
}

fn phrases(list: &[&str]) -> Vec<Vec<String>> {
    list.iter()
        .map(|p| TokenSequence::from_text(p).tokens().to_vec())
        .collect()
}

fn any_phrase(tokens: &[String], cues: &[Vec<String>]) -> bool {
    cues.iter()
        .any(|cue| !cue.is_empty() && tokens.windows(cue.len()).any(|w| w == cue.as_slice()))
}

impl Default for RuleClassifier {
    fn default() -> Self {
        Self {
            er: phrases(ER_CUES),
            ip: phrases(IP_CUES),
            ex: phrases(EX_CUES),
        }
    }
}

impl RuleClassifier {
    fn asks_question(text: &str) -> bool {
        let sentences = default_segmenters()
            .segment(text, &LanguageCode::english())
            .unwrap_or_default();
        sentences.iter().any(|s| {
            s.trim_end_matches(['"', '\'', ')']).ends_with('?')
                && TokenSequence::from_text(s)
                    .tokens()
                    .first()
                    .is_some_and(|t| INTERROGATIVES.contains(&t.as_str()))
        })
    }
}

impl MechanismClassifierBackend for RuleClassifier {
    fn classify(&self, text: &str) -> Result<EmpathyProfile, BackendError> {
        let tokens = TokenSequence::from_text(text);
        let t = tokens.tokens();
        Ok(EmpathyProfile {
            er: any_phrase(t, &self.er),
            ip: any_phrase(t, &self.ip),
            ex: any_phrase(t, &self.ex) || Self::asks_question(text),
        })
    }
}

/// Client for the classify wire contract: `{text}` → `{er, ip, ex}` and, for
/// batches, `{texts}` → `{results: [{er, ip, ex}, ...]}`.
pub struct HttpClassifier {
    endpoint: String,
    batch_endpoint: Option<String>,
    transport: Arc<dyn JsonTransport>,
    retry: RetryPolicy,
}

impl HttpClassifier {
    pub fn new(endpoint: impl Into<String>, transport: Arc<dyn JsonTransport>) -> Self {
        Self {
            endpoint: endpoint.into(),
            batch_endpoint: None,
            transport,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_batch_endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.batch_endpoint = Some(endpoint.into());
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn post(&self, url: &str, body: &Value) -> Result<Value, BackendError> {
        Ok(self
            .retry
            .run(|_| self.transport.post_json(url, body), TransportError::is_retryable)?)
    }
}

fn parse_profile(v: &Value) -> Result<EmpathyProfile, BackendError> {
    serde_json::from_value(v.clone()).map_err(|e| BackendError::Parse {
        message: e.to_string(),
        raw: v.to_string(),
    })
}

impl MechanismClassifierBackend for HttpClassifier {
    fn classify(&self, text: &str) -> Result<EmpathyProfile, BackendError> {
        let reply = self.post(&self.endpoint, &json!({ "text": text }))?;
        parse_profile(&reply)
    }

    fn classify_batch(&self, texts: &[&str]) -> Result<Vec<EmpathyProfile>, BackendError> {
        let Some(url) = &self.batch_endpoint else {
            return texts.iter().map(|t| self.classify(t)).collect();
        };
        let reply = self.post(url, &json!({ "texts": texts }))?;
        let results = reply
            .get("results")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::Parse {
                message: "missing results array".into(),
                raw: reply.to_string(),
            })?;
        if results.len() != texts.len() {
            return Err(BackendError::Parse {
                message: format!("expected {} results, got {}", texts.len(), results.len()),
                raw: reply.to_string(),
            });
        }
        results.iter().map(parse_profile).collect()
    }
}

pub fn empathy_profile(
    text: &str,
    backend: &dyn MechanismClassifierBackend,
) -> Result<EmpathyProfile, BackendError> {
    backend.classify(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpathyDetail {
    pub reference: EmpathyProfile,
    pub candidate: EmpathyProfile,
    /// Agreement per mechanism, in (er, ip, ex) order.
    pub agreement: [bool; 3],
}

fn match_score(reference: EmpathyProfile, candidate: EmpathyProfile) -> EvaluatorScore {
    let agreement = reference.agreement(&candidate);
    let value = if reference == candidate { 1.0 } else { 0.0 };
    EvaluatorScore::new(EMPATHY_EVALUATOR_ID, value).with_detail(json!(EmpathyDetail {
        reference,
        candidate,
        agreement,
    }))
}

/// `1` when both texts have the same empathy profile, else `0`.
pub fn empathy_match(
    reference_en: &str,
    candidate_en: &str,
    backend: &dyn MechanismClassifierBackend,
) -> Result<EvaluatorScore, BackendError> {
    Ok(match_score(backend.classify(reference_en)?, backend.classify(candidate_en)?))
}

/// Scores a pair of precomputed profiles.
pub fn profile_match(reference: EmpathyProfile, candidate: EmpathyProfile) -> EvaluatorScore {
    match_score(reference, candidate)
}

/// Fraction of prompts on which each mechanism agreed, in (er, ip, ex) order.
pub fn mechanism_agreement(result: &ConsistencyResult) -> Option<[f64; 3]> {
    let mut hits = [0usize; 3];
    for score in result.per_prompt.values() {
        let detail: EmpathyDetail = serde_json::from_value(score.detail.clone()).ok()?;
        for (h, a) in hits.iter_mut().zip(detail.agreement) {
            *h += a as usize;
        }
    }
    let n = result.per_prompt.len() as f64;
    (n > 0.0).then(|| hits.map(|h| h as f64 / n))
}

/// Exact-match evaluator. Profiles are memoized by text, since the English
/// reference recurs for every language.
pub struct EmpathyEvaluator {
    backend: Arc<dyn MechanismClassifierBackend>,
    profiles: Mutex<HashMap<String, EmpathyProfile>>,
}

impl EmpathyEvaluator {
    pub fn new(backend: Arc<dyn MechanismClassifierBackend>) -> Self {
        Self {
            backend,
            profiles: Mutex::new(HashMap::new()),
        }
    }

    fn profile(&self, text: &str) -> Result<EmpathyProfile, BackendError> {
        if let Some(p) = self.profiles.lock().expect("profile cache poisoned").get(text) {
            return Ok(*p);
        }
        let p = self.backend.classify(text)?;
        self.profiles
            .lock()
            .expect("profile cache poisoned")
            .insert(text.to_string(), p);
        Ok(p)
    }
}

impl Default for EmpathyEvaluator {
    fn default() -> Self {
        Self::new(Arc::new(RuleClassifier::default()))
    }
}

impl Evaluator for EmpathyEvaluator {
    fn id(&self) -> &str {
        EMPATHY_EVALUATOR_ID
    }

    fn score(&self, reference_en: &str, candidate_en: &str) -> Result<EvaluatorScore, BackendError> {
        Ok(match_score(self.profile(reference_en)?, self.profile(candidate_en)?))
    }
}
