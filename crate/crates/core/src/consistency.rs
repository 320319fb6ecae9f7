//! The consistency formula: evaluators, pairwise scoring and the empirical
//! mean over prompts.

use std::collections::BTreeMap;

use crate::error::{BackendError, Error, Result};
use crate::lang::LanguageCode;
use crate::types::{ConsistencyResult, EvaluatorScore, ResponseStatus};

/// An English-only evaluator that scores a candidate against a reference.
///
/// Implementations return a value in `[0, 1]`. Binary evaluators return
/// exactly `0.0` or `1.0`.
pub trait Evaluator: Send + Sync {
    fn id(&self) -> &str;

    fn score(&self, reference_en: &str, candidate_en: &str)
        -> Result<EvaluatorScore, BackendError>;
}

/// Scores one pair, attaching the evaluator id to failures and rejecting
/// out-of-range values.
pub fn evaluate_pair(
    evaluator: &dyn Evaluator,
    reference_en: &str,
    candidate_en: &str,
) -> Result<EvaluatorScore> {
    let score = evaluator
        .score(reference_en, candidate_en)
        .map_err(|source| Error::Evaluator {
            evaluator_id: evaluator.id().to_string(),
            source,
        })?;
    if !(0.0..=1.0).contains(&score.value) {
        return Err(Error::Evaluator {
            evaluator_id: evaluator.id().to_string(),
            source: BackendError::Invalid(format!("score {} outside [0, 1]", score.value)),
        });
    }
    Ok(score)
}

/// One (English reference, translated candidate) pair to score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringPair {
    pub prompt_id: String,
    pub reference_en: String,
    pub candidate_en: String,
    pub candidate_status: ResponseStatus,
}

impl ScoringPair {
    pub fn new(
        prompt_id: impl Into<String>,
        reference_en: impl Into<String>,
        candidate_en: impl Into<String>,
    ) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            reference_en: reference_en.into(),
            candidate_en: candidate_en.into(),
            candidate_status: ResponseStatus::Ok,
        }
    }

    pub fn with_status(mut self, status: ResponseStatus) -> Self {
        self.candidate_status = status;
        self
    }
}

/// Scores one pair; non-ok candidates get a `status:<status>` flag.
pub fn score_pair(evaluator: &dyn Evaluator, pair: &ScoringPair) -> Result<EvaluatorScore> {
    let mut score = evaluate_pair(evaluator, &pair.reference_en, &pair.candidate_en)
        .map_err(|e| e.for_prompt(&pair.prompt_id))?;
    if pair.candidate_status != ResponseStatus::Ok {
        score = score.with_flag(format!("status:{}", pair.candidate_status.as_str()));
    }
    Ok(score)
}

/// Mean of already-computed per-prompt scores. Summation runs in prompt id
/// order so the result does not depend on input order.
pub fn aggregate(
    model_id: &str,
    language: &LanguageCode,
    evaluator_id: &str,
    per_prompt: BTreeMap<String, EvaluatorScore>,
) -> Result<ConsistencyResult> {
    if per_prompt.is_empty() {
        return Err(Error::NoPrompts);
    }
    let n = per_prompt.len();
    let sum: f64 = per_prompt.values().map(|s| s.value).sum();
    Ok(ConsistencyResult {
        model_id: model_id.to_string(),
        language: language.clone(),
        evaluator_id: evaluator_id.to_string(),
        value: sum / n as f64,
        n_prompts: n,
        per_prompt,
    })
}

/// Cross-lingual consistency of `model_id` in `language`: the mean evaluator
/// score over all prompt pairs.
///
/// Candidates whose response status is not `ok` are scored like any other
/// text and carry a `status:<status>` flag.
pub fn consistency(
    model_id: &str,
    language: &LanguageCode,
    evaluator: &dyn Evaluator,
    pairs: &[ScoringPair],
) -> Result<ConsistencyResult> {
    if pairs.is_empty() {
        return Err(Error::NoPrompts);
    }
    let mut per_prompt = BTreeMap::new();
    for pair in pairs {
        let score = score_pair(evaluator, pair)?;
        if per_prompt.insert(pair.prompt_id.clone(), score).is_some() {
            return Err(Error::InvalidRecord(format!(
                "duplicate prompt id {:?}",
                pair.prompt_id
            )));
        }
    }
    aggregate(model_id, language, evaluator.id(), per_prompt)
}

/// Harmonic mean of precision and recall; `0` when both are `0`.
pub fn f_score(precision: f64, recall: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&precision) {
        return Err(Error::OutOfRange {
            what: "precision",
            value: precision,
        });
    }
    if !(0.0..=1.0).contains(&recall) {
        return Err(Error::OutOfRange {
            what: "recall",
            value: recall,
        });
    }
    Ok(harmonic(precision, recall))
}

pub(crate) fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}
