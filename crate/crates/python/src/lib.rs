//! Python bindings for the polycon scoring core.

use std::collections::BTreeMap;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use polycon_core::config::TrainLanguages;
use polycon_core::empathy::{empathy_match, EmpathyProfile, MechanismClassifierBackend, RuleClassifier};
use polycon_core::heuristic::{self, RougeScore};
use polycon_core::info::{info_consistency_pair, InfoDetail, RuleBasedBackend};
use polycon_core::registry::EvaluatorRegistry;
use polycon_core::report::{GroupingKind, LanguageGrouping};
use polycon_core::tokenize::TokenSequence;
use polycon_core::{ConsistencyResult, Evaluator as CoreEvaluator, EvaluatorScore, LanguageCode, ScoringPair};

create_exception!(polycon, PolyconError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    PolyconError::new_err(e.to_string())
}

fn language(code: &str) -> PyResult<LanguageCode> {
    LanguageCode::parse(code).map_err(err)
}

fn rouge_tuple(s: RougeScore) -> (f64, f64, f64) {
    (s.precision, s.recall, s.f)
}

/// Canonical code for a language code or alias.
#[pyfunction]
fn normalize_language(code: &str) -> PyResult<String> {
    Ok(language(code)?.code().to_string())
}

/// The 30 evaluation language codes.
#[pyfunction]
fn evaluation_languages() -> Vec<String> {
    LanguageCode::evaluation_languages().iter().map(|l| l.code().to_string()).collect()
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    TokenSequence::from_text(text).tokens().to_vec()
}

#[pyfunction]
fn segment(text: &str, language_code: &str) -> PyResult<Vec<String>> {
    polycon_core::segment::segment(text, &language(language_code)?).map_err(err)
}

/// Returns `(degenerate, repeated_unit, repeat_count)`.
#[pyfunction]
fn detect_degeneration(text: &str) -> (bool, Option<String>, Option<usize>) {
    let r = polycon_core::degeneration::detect_degeneration(text);
    (r.degenerate, r.repeated_unit, r.repeat_count)
}

#[pyfunction]
fn f_score(precision: f64, recall: f64) -> PyResult<f64> {
    polycon_core::f_score(precision, recall).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (reference, candidate, max_n=4))]
fn bleu(reference: &str, candidate: &str, max_n: usize) -> PyResult<f64> {
    let (r, c) = (TokenSequence::from_text(reference), TokenSequence::from_text(candidate));
    Ok(heuristic::bleu(&r, &c, max_n).map_err(err)?.value)
}

/// Returns `(precision, recall, f)`.
#[pyfunction]
#[pyo3(signature = (reference, candidate, n=1))]
fn rouge_n(reference: &str, candidate: &str, n: usize) -> PyResult<(f64, f64, f64)> {
    let (r, c) = (TokenSequence::from_text(reference), TokenSequence::from_text(candidate));
    Ok(rouge_tuple(heuristic::rouge_n(&r, &c, n).map_err(err)?))
}

/// Returns `(precision, recall, f)`.
#[pyfunction]
fn rouge_l(reference: &str, candidate: &str) -> (f64, f64, f64) {
    let (r, c) = (TokenSequence::from_text(reference), TokenSequence::from_text(candidate));
    rouge_tuple(heuristic::rouge_l(&r, &c))
}

/// Rule-based information consistency: `(f, precision_dir, recall_dir)`.
#[pyfunction]
fn info_pair(reference: &str, candidate: &str) -> PyResult<(f64, f64, f64)> {
    let score = info_consistency_pair(reference, candidate, &RuleBasedBackend::default()).map_err(err)?;
    let d = InfoDetail::from_score(&score).ok_or_else(|| err("score carries no claim detail"))?;
    Ok((score.value, d.precision_dir, d.recall_dir))
}

/// Rule-based empathy profile: `(er, ip, ex)`.
#[pyfunction]
fn empathy_profile(text: &str) -> PyResult<(bool, bool, bool)> {
    let p = RuleClassifier::default().classify(text).map_err(err)?;
    Ok((p.er, p.ip, p.ex))
}

/// `1.0` when both texts show the same set of empathy mechanisms.
#[pyfunction]
fn empathy_exact(reference: &str, candidate: &str) -> PyResult<f64> {
    Ok(empathy_match(reference, candidate, &RuleClassifier::default()).map_err(err)?.value)
}

/// Whether two profiles, given as 3-bit codes `er<<2 | ip<<1 | ex`, match.
#[pyfunction]
fn profiles_match(reference: u8, candidate: u8) -> PyResult<bool> {
    if reference > 7 || candidate > 7 {
        return Err(PyValueError::new_err("profile codes are 0..=7"));
    }
    let s = polycon_core::empathy::profile_match(EmpathyProfile::from_index(reference), EmpathyProfile::from_index(candidate));
    Ok(s.value == 1.0)
}

/// Group means of per-language scores. `grouping` is `script`, `family` or
/// `train`; `train` uses `train_languages`, where `None` means undeclared.
#[pyfunction]
#[pyo3(signature = (per_language, grouping, train_languages=None))]
fn group_means(
    per_language: BTreeMap<String, f64>,
    grouping: &str,
    train_languages: Option<Vec<String>>,
) -> PyResult<BTreeMap<String, Option<f64>>> {
    let kind: GroupingKind = grouping.parse().map_err(PyValueError::new_err)?;
    let grouping = match kind {
        GroupingKind::Script => LanguageGrouping::script(),
        GroupingKind::Family => LanguageGrouping::family(),
        GroupingKind::Train => {
            let declared = match train_languages {
                None => TrainLanguages::Unknown,
                Some(codes) => TrainLanguages::Declared(codes.iter().map(|c| language(c)).collect::<PyResult<_>>()?),
            };
            LanguageGrouping::train(&declared)
        }
    };
    let scores = per_language
        .into_iter()
        .map(|(c, v)| Ok((language(&c)?, v)))
        .collect::<PyResult<BTreeMap<_, _>>>()?;
    polycon_core::report::group_means(&scores, &grouping).map_err(err)
}

#[pyclass(name = "Score", frozen)]
struct PyScore {
    inner: EvaluatorScore,
}

#[pymethods]
impl PyScore {
    #[getter]
    fn value(&self) -> f64 {
        self.inner.value
    }

    #[getter]
    fn evaluator_id(&self) -> &str {
        &self.inner.evaluator_id
    }

    #[getter]
    fn flags(&self) -> Vec<String> {
        self.inner.flags.clone()
    }

    /// Evaluator-specific detail as a JSON string.
    #[getter]
    fn detail_json(&self) -> String {
        self.inner.detail.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Score({}={}, flags={:?})", self.inner.evaluator_id, self.inner.value, self.inner.flags)
    }
}

#[pyclass(name = "ConsistencyResult", frozen)]
struct PyConsistencyResult {
    inner: ConsistencyResult,
}

#[pymethods]
impl PyConsistencyResult {
    #[getter]
    fn value(&self) -> f64 {
        self.inner.value
    }

    #[getter]
    fn n_prompts(&self) -> usize {
        self.inner.n_prompts
    }

    #[getter]
    fn language(&self) -> String {
        self.inner.language.code().to_string()
    }

    #[getter]
    fn per_prompt(&self) -> BTreeMap<String, PyScore> {
        self.inner
            .per_prompt
            .iter()
            .map(|(k, s)| (k.clone(), PyScore { inner: s.clone() }))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "ConsistencyResult({}, {}, {}={:.4}, n={})",
            self.inner.model_id, self.inner.language, self.inner.evaluator_id, self.inner.value, self.inner.n_prompts
        )
    }
}

/// One of the built-in evaluators: `exact`, `bleu`, `rouge1`, `rouge2`,
/// `rougeL`, `info_fscore` or `empathy_exact`.
#[pyclass(name = "Evaluator", frozen)]
struct PyEvaluator {
    inner: Arc<dyn CoreEvaluator>,
}

#[pymethods]
impl PyEvaluator {
    #[new]
    fn new(id: &str) -> PyResult<Self> {
        Ok(Self {
            inner: EvaluatorRegistry::builtin().get(id).map_err(err)?,
        })
    }

    #[staticmethod]
    fn ids() -> Vec<String> {
        EvaluatorRegistry::builtin().ids().map(str::to_string).collect()
    }

    #[getter]
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn score(&self, reference: &str, candidate: &str) -> PyResult<PyScore> {
        let inner = polycon_core::evaluate_pair(self.inner.as_ref(), reference, candidate).map_err(err)?;
        Ok(PyScore { inner })
    }

    /// Mean score over `(prompt_id, reference, candidate)` triples.
    fn consistency(
        &self,
        py: Python<'_>,
        model_id: &str,
        language_code: &str,
        pairs: Vec<(String, String, String)>,
    ) -> PyResult<PyConsistencyResult> {
        let lang = language(language_code)?;
        let pairs: Vec<ScoringPair> = pairs.iter().map(|(id, r, c)| ScoringPair::new(id, r, c)).collect();
        let inner = py
            .detach(|| polycon_core::consistency(model_id, &lang, self.inner.as_ref(), &pairs))
            .map_err(err)?;
        Ok(PyConsistencyResult { inner })
    }

    fn __repr__(&self) -> String {
        format!("Evaluator({:?})", self.inner.id())
    }
}

#[pymodule]
fn polycon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PolyconError", m.py().get_type::<PolyconError>())?;
    m.add("NO_ANSWER", polycon_core::NO_ANSWER)?;
    m.add_class::<PyEvaluator>()?;
    m.add_class::<PyScore>()?;
    m.add_class::<PyConsistencyResult>()?;
    m.add_function(wrap_pyfunction!(normalize_language, m)?)?;
    m.add_function(wrap_pyfunction!(evaluation_languages, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(detect_degeneration, m)?)?;
    m.add_function(wrap_pyfunction!(f_score, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_n, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(info_pair, m)?)?;
    m.add_function(wrap_pyfunction!(empathy_profile, m)?)?;
    m.add_function(wrap_pyfunction!(empathy_exact, m)?)?;
    m.add_function(wrap_pyfunction!(profiles_match, m)?)?;
    m.add_function(wrap_pyfunction!(group_means, m)?)?;
    Ok(())
}
