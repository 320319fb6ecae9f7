//! Model-free n-gram evaluators: sentence BLEU, ROUGE-N, ROUGE-L and exact
//! match.

use serde::Serialize;
use serde_json::json;

use crate::consistency::{harmonic, Evaluator};
use crate::error::{BackendError, Error, Result};
use crate::tokenize::TokenSequence;
use crate::types::EvaluatorScore;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BleuScore {
    pub value: f64,
    /// Smoothed modified precision per order, `1..=max_n`.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    /// Set when the candidate had no tokens; `value` is then `0`.
    pub empty_candidate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    /// Set when neither side had an n-gram of the requested order.
    pub insufficient_input: bool,
}

impl RougeScore {
    const ZERO: RougeScore = RougeScore {
        precision: 0.0,
        recall: 0.0,
        f: 0.0,
        insufficient_input: false,
    };
}

fn sorted_ngrams(tokens: &[String], n: usize) -> Vec<&[String]> {
    let mut grams: Vec<&[String]> = if tokens.len() >= n { tokens.windows(n).collect() } else { Vec::new() };
    grams.sort_unstable();
    grams
}

/// Returns (clipped overlap, candidate n-gram total, reference n-gram total).
///
/// Walking both sorted n-gram lists in step pairs each candidate occurrence
/// with at most one reference occurrence, which is the clipped count.
fn clipped_overlap(reference: &[String], candidate: &[String], n: usize) -> (usize, usize, usize) {
    let r = sorted_ngrams(reference, n);
    let c = sorted_ngrams(candidate, n);
    let (mut i, mut j, mut overlap) = (0, 0, 0);
    while i < r.len() && j < c.len() {
        match r[i].cmp(c[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                overlap += 1;
                i += 1;
                j += 1;
            }
        }
    }
    (overlap, c.len(), r.len())
}

/// Sentence-level BLEU with add-one smoothing on orders without matches.
///
/// A candidate sharing no unigram with the reference scores `0`.
pub fn bleu(reference: &TokenSequence, candidate: &TokenSequence, max_n: usize) -> Result<BleuScore> {
    if max_n == 0 {
        return Err(Error::InvalidOrder);
    }
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    if candidate.is_empty() {
        return Ok(BleuScore {
            value: 0.0,
            precisions: vec![0.0; max_n],
            brevity_penalty: 0.0,
            empty_candidate: true,
        });
    }
    let (r, c) = (reference.len() as f64, candidate.len() as f64);
    let brevity_penalty = if c < r { (1.0 - r / c).exp() } else { 1.0 };

    let mut precisions = Vec::with_capacity(max_n);
    let mut unigram_hit = true;
    for n in 1..=max_n {
        let (matches, total, _) = clipped_overlap(reference.tokens(), candidate.tokens(), n);
        if n == 1 && matches == 0 {
            unigram_hit = false;
        }
        let p = if matches > 0 {
            matches as f64 / total as f64
        } else {
            1.0 / (total as f64 + 1.0)
        };
        precisions.push(p);
    }
    let value = if unigram_hit {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / max_n as f64;
        (brevity_penalty * log_mean.exp()).min(1.0)
    } else {
        0.0
    };
    Ok(BleuScore {
        value,
        precisions,
        brevity_penalty,
        empty_candidate: false,
    })
}

/// ROUGE-N with clipped n-gram counts.
pub fn rouge_n(reference: &TokenSequence, candidate: &TokenSequence, n: usize) -> Result<RougeScore> {
    if n == 0 {
        return Err(Error::InvalidOrder);
    }
    let (overlap, cand_total, ref_total) =
        clipped_overlap(reference.tokens(), candidate.tokens(), n);
    if cand_total == 0 && ref_total == 0 {
        return Ok(RougeScore {
            insufficient_input: true,
            ..RougeScore::ZERO
        });
    }
    let ratio = |total: usize| {
        if total == 0 {
            0.0
        } else {
            overlap as f64 / total as f64
        }
    };
    let (precision, recall) = (ratio(cand_total), ratio(ref_total));
    Ok(RougeScore {
        precision,
        recall,
        f: harmonic(precision, recall),
        insufficient_input: false,
    })
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L from the longest common subsequence.
pub fn rouge_l(reference: &TokenSequence, candidate: &TokenSequence) -> RougeScore {
    if reference.is_empty() || candidate.is_empty() {
        return RougeScore {
            insufficient_input: reference.is_empty() && candidate.is_empty(),
            ..RougeScore::ZERO
        };
    }
    let lcs = lcs_len(reference.tokens(), candidate.tokens()) as f64;
    let precision = lcs / candidate.len() as f64;
    let recall = lcs / reference.len() as f64;
    RougeScore {
        precision,
        recall,
        f: harmonic(precision, recall),
        insufficient_input: false,
    }
}

/// `1` when the trimmed texts are identical, else `0`.
#[derive(Debug, Default, Clone, Copy)]
pub struct ExactMatch;

impl Evaluator for ExactMatch {
    fn id(&self) -> &str {
        "exact"
    }

    fn score(&self, reference_en: &str, candidate_en: &str) -> Result<EvaluatorScore, BackendError> {
        let value = if reference_en.trim() == candidate_en.trim() { 1.0 } else { 0.0 };
        Ok(EvaluatorScore::new(self.id(), value))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BleuEvaluator {
    pub max_n: usize,
}

impl Default for BleuEvaluator {
    fn default() -> Self {
        Self { max_n: 4 }
    }
}

impl Evaluator for BleuEvaluator {
    fn id(&self) -> &str {
        "bleu"
    }

    fn score(&self, reference_en: &str, candidate_en: &str) -> Result<EvaluatorScore, BackendError> {
        let reference = TokenSequence::from_text(reference_en);
        let candidate = TokenSequence::from_text(candidate_en);
        let s = bleu(&reference, &candidate, self.max_n)
            .map_err(|e| BackendError::Invalid(e.to_string()))?;
        let mut score = EvaluatorScore::new(self.id(), s.value).with_detail(json!({
            "precisions": s.precisions,
            "brevity_penalty": s.brevity_penalty,
        }));
        if s.empty_candidate {
            score = score.with_flag("empty_candidate");
        }
        Ok(score)
    }
}

fn rouge_score(id: &str, s: RougeScore) -> EvaluatorScore {
    let score = EvaluatorScore::new(id, s.f).with_detail(json!({
        "precision": s.precision,
        "recall": s.recall,
        "f": s.f,
    }));
    if s.insufficient_input {
        score.with_flag("insufficient_input")
    } else {
        score
    }
}

/// ROUGE-N F-measure, registered as `rouge1` and `rouge2`.
#[derive(Debug, Clone)]
pub struct RougeNEvaluator {
    n: usize,
    id: String,
}

impl RougeNEvaluator {
    pub fn new(n: usize) -> Self {
        Self {
            n: n.max(1),
            id: format!("rouge{}", n.max(1)),
        }
    }
}

impl Evaluator for RougeNEvaluator {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, reference_en: &str, candidate_en: &str) -> Result<EvaluatorScore, BackendError> {
        let s = rouge_n(
            &TokenSequence::from_text(reference_en),
            &TokenSequence::from_text(candidate_en),
            self.n,
        )
        .map_err(|e| BackendError::Invalid(e.to_string()))?;
        Ok(rouge_score(&self.id, s))
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RougeLEvaluator;

impl Evaluator for RougeLEvaluator {
    fn id(&self) -> &str {
        "rougeL"
    }

    fn score(&self, reference_en: &str, candidate_en: &str) -> Result<EvaluatorScore, BackendError> {
        let s = rouge_l(
            &TokenSequence::from_text(reference_en),
            &TokenSequence::from_text(candidate_en),
        );
        Ok(rouge_score(self.id(), s))
    }
}
