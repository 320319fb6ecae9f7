//! Information consistency: claim-level precision in both directions,
//! combined into an F-score.
//!
//! Claims are extracted from one text and checked against the other.
//! Extracting from the translated response and verifying against the English
//! one gives the precision direction; swapping the arguments gives recall.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;
use std::sync::Arc;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use crate::consistency::{harmonic, Evaluator};
use crate::error::BackendError;
use crate::lang::LanguageCode;
use crate::parallel::bounded_map;
use crate::segment::default_segmenters;
use crate::tokenize::TokenSequence;
use crate::types::{ConsistencyResult, EvaluatorScore, NO_ANSWER};

pub const NO_CLAIMS: &str = "no_claims";

/// Content-word recall a claim needs to count as supported by the rule backend.
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub text: String,
    /// Character range `[start, end)` in the originating text.
    pub source_span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportVerdict {
    pub claim: Claim,
    pub supported: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

/// Extracts atomic claims and checks each against a reference.
pub trait ClaimJudgeBackend: Send + Sync {
    fn extract(&self, text: &str) -> Result<Vec<Claim>, BackendError>;

    fn verify(&self, claim: &Claim, reference: &str) -> Result<SupportVerdict, BackendError>;
}

static STOPWORDS: Lazy<HashSet<&'static str>> = Lazy::new(|| {
    include_str!("../data/stopwords_en.txt")
        .split_whitespace()
        .collect()
});

/// Distinct content words in first-occurrence order: tokens of three or more
/// characters that are not stopwords.
pub fn content_words(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    TokenSequence::from_text(text)
        .tokens()
        .iter()
        .filter(|t| t.chars().count() >= 3 && !STOPWORDS.contains(t.as_str()))
        .filter(|t| seen.insert((*t).clone()))
        .cloned()
        .collect()
}

/// Deterministic backend: one claim per English sentence, supported when
/// enough of its content words occur in the reference.
#[derive(Debug, Clone)]
pub struct RuleBasedBackend {
    pub threshold: f64,
}

impl Default for RuleBasedBackend {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_SUPPORT_THRESHOLD,
        }
    }
}

impl RuleBasedBackend {
    pub fn with_threshold(threshold: f64) -> Self {
        Self { threshold }
    }
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    needle.is_empty() || haystack.windows(needle.len()).any(|w| w == needle)
}

impl ClaimJudgeBackend for RuleBasedBackend {
    fn extract(&self, text: &str) -> Result<Vec<Claim>, BackendError> {
        let spans = default_segmenters()
            .segment_spans(text, &LanguageCode::english())
            .map_err(|e| BackendError::Invalid(e.to_string()))?;
        let mut pos = spans.leading.chars().count();
        let mut claims = Vec::with_capacity(spans.segments.len());
        for seg in spans.segments {
            let len = seg.text.chars().count();
            claims.push(Claim {
                text: seg.text,
                source_span: (pos, pos + len),
            });
            pos += len + seg.trailing.chars().count();
        }
        Ok(claims)
    }

    fn verify(&self, claim: &Claim, reference: &str) -> Result<SupportVerdict, BackendError> {
        let words = content_words(&claim.text);
        let (supported, rationale) = if words.is_empty() {
            // nothing to count; fall back to verbatim containment
            let hit = contains_run(
                TokenSequence::from_text(reference).tokens(),
                TokenSequence::from_text(&claim.text).tokens(),
            );
            (hit, "no content words; verbatim match".to_string())
        } else {
            let reference_words: HashSet<String> = content_words(reference).into_iter().collect();
            let present = words.iter().filter(|w| reference_words.contains(*w)).count();
            let recall = present as f64 / words.len() as f64;
            (
                recall + 1e-9 >= self.threshold,
                format!("{present}/{} content words present", words.len()),
            )
        };
        Ok(SupportVerdict {
            claim: claim.clone(),
            supported,
            rationale: Some(rationale),
        })
    }
}

fn normalized_claim(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn is_sentinel(text: &str) -> bool {
    text.trim() == NO_ANSWER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactPrecision {
    pub value: f64,
    pub verdicts: Vec<SupportVerdict>,
    /// The candidate yielded no claims; `value` is `0`.
    pub no_claims: bool,
}

/// Fraction of the candidate's (deduplicated) claims that the reference
/// supports.
///
/// A candidate without claims scores `0`. The `"No answer"` sentinel counts
/// as having no claims, and as a reference it supports nothing.
pub fn fact_precision(
    candidate: &str,
    reference: &str,
    backend: &dyn ClaimJudgeBackend,
) -> Result<FactPrecision, BackendError> {
    fact_precision_bounded(candidate, reference, backend, 1)
}

/// [`fact_precision`] with up to `max_in_flight` concurrent verify calls.
pub fn fact_precision_bounded(
    candidate: &str,
    reference: &str,
    backend: &dyn ClaimJudgeBackend,
    max_in_flight: usize,
) -> Result<FactPrecision, BackendError> {
    let claims = if is_sentinel(candidate) {
        Vec::new()
    } else {
        let mut seen = BTreeSet::new();
        backend
            .extract(candidate)?
            .into_iter()
            .filter(|c| seen.insert(normalized_claim(&c.text)))
            .collect()
    };
    if claims.is_empty() {
        return Ok(FactPrecision {
            value: 0.0,
            verdicts: Vec::new(),
            no_claims: true,
        });
    }
    let verdicts: Vec<SupportVerdict> = if is_sentinel(reference) {
        claims
            .into_iter()
            .map(|claim| SupportVerdict {
                claim,
                supported: false,
                rationale: Some("reference is the no-answer sentinel".into()),
            })
            .collect()
    } else {
        bounded_map(&claims, max_in_flight, |_, c| backend.verify(c, reference))
            .into_iter()
            .collect::<Result<_, _>>()?
    };
    let supported = verdicts.iter().filter(|v| v.supported).count();
    Ok(FactPrecision {
        value: supported as f64 / verdicts.len() as f64,
        verdicts,
        no_claims: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoDetail {
    pub precision_dir: f64,
    pub recall_dir: f64,
    pub candidate_claims: usize,
    pub candidate_supported: usize,
    pub reference_claims: usize,
    pub reference_supported: usize,
    pub precision_verdicts: Vec<SupportVerdict>,
    pub recall_verdicts: Vec<SupportVerdict>,
}

impl InfoDetail {
    pub fn from_score(score: &EvaluatorScore) -> Option<InfoDetail> {
        serde_json::from_value(score.detail.clone()).ok()
    }
}

pub const INFO_EVALUATOR_ID: &str = "info_fscore";

/// Information-consistency score of one pair: the harmonic mean of the
/// precision direction (candidate claims checked against the reference) and
/// the recall direction (reference claims checked against the candidate).
pub fn info_consistency_pair(
    reference_en: &str,
    candidate_en: &str,
    backend: &dyn ClaimJudgeBackend,
) -> Result<EvaluatorScore, BackendError> {
    info_pair_bounded(reference_en, candidate_en, backend, 1)
}

fn info_pair_bounded(
    reference_en: &str,
    candidate_en: &str,
    backend: &dyn ClaimJudgeBackend,
    max_in_flight: usize,
) -> Result<EvaluatorScore, BackendError> {
    let precision = fact_precision_bounded(candidate_en, reference_en, backend, max_in_flight)?;
    let recall = fact_precision_bounded(reference_en, candidate_en, backend, max_in_flight)?;
    let count = |v: &[SupportVerdict]| v.iter().filter(|x| x.supported).count();
    let detail = InfoDetail {
        precision_dir: precision.value,
        recall_dir: recall.value,
        candidate_claims: precision.verdicts.len(),
        candidate_supported: count(&precision.verdicts),
        reference_claims: recall.verdicts.len(),
        reference_supported: count(&recall.verdicts),
        precision_verdicts: precision.verdicts,
        recall_verdicts: recall.verdicts,
    };
    let mut score = EvaluatorScore::new(
        INFO_EVALUATOR_ID,
        harmonic(detail.precision_dir, detail.recall_dir),
    )
    .with_detail(serde_json::to_value(&detail).map_err(|e| BackendError::Invalid(e.to_string()))?);
    if precision.no_claims {
        score = score.with_flag(NO_CLAIMS);
    }
    if recall.no_claims {
        score = score.with_flag("reference_no_claims");
    }
    Ok(score)
}

pub struct InfoConsistencyEvaluator {
    backend: Arc<dyn ClaimJudgeBackend>,
    max_in_flight: usize,
}

impl InfoConsistencyEvaluator {
    pub fn new(backend: Arc<dyn ClaimJudgeBackend>) -> Self {
        Self {
            backend,
            max_in_flight: 1,
        }
    }

    /// Caps concurrent verify calls per direction.
    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.max_in_flight = limit.max(1);
        self
    }
}

impl Default for InfoConsistencyEvaluator {
    fn default() -> Self {
        Self::new(Arc::new(RuleBasedBackend::default()))
    }
}

impl Evaluator for InfoConsistencyEvaluator {
    fn id(&self) -> &str {
        INFO_EVALUATOR_ID
    }

    fn score(&self, reference_en: &str, candidate_en: &str) -> Result<EvaluatorScore, BackendError> {
        info_pair_bounded(reference_en, candidate_en, self.backend.as_ref(), self.max_in_flight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Precision,
    Recall,
}

/// One line of the claim audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimAuditRecord {
    pub model_id: String,
    pub language: LanguageCode,
    pub prompt_id: String,
    pub direction: Direction,
    pub claim: String,
    pub supported: bool,
}

pub fn audit_records(result: &ConsistencyResult) -> Vec<ClaimAuditRecord> {
    let mut out = Vec::new();
    for (prompt_id, score) in &result.per_prompt {
        let Some(detail) = InfoDetail::from_score(score) else {
            continue;
        };
        for (direction, verdicts) in [
            (Direction::Precision, &detail.precision_verdicts),
            (Direction::Recall, &detail.recall_verdicts),
        ] {
            for v in verdicts {
                out.push(ClaimAuditRecord {
                    model_id: result.model_id.clone(),
                    language: result.language.clone(),
                    prompt_id: prompt_id.clone(),
                    direction,
                    claim: v.claim.text.clone(),
                    supported: v.supported,
                });
            }
        }
    }
    out
}

pub fn write_audit_jsonl<W: Write>(records: &[ClaimAuditRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
