//! Store-backed stages: translate stored responses, score them, and run the
//! back-translation self-check over stored English responses.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::consistency::{aggregate, score_pair, Evaluator, ScoringPair};
use crate::degeneration::DegenerationConfig;
use crate::error::{Error, Result};
use crate::lang::LanguageCode;
use crate::parallel::bounded_map;
use crate::segment::default_segmenters;
use crate::store::{RecordKey, RunStore, Stage};
use crate::translate::{TranslationClient, Translator};
use crate::types::{
    ConsistencyResult, EvaluatorScore, ModelResponse, ResponseStatus, TranslatedResponse,
};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StageSummary {
    pub written: usize,
    pub skipped: usize,
    pub flagged: usize,
}

fn responses(store: &RunStore) -> Result<Vec<ModelResponse>> {
    store
        .records(&Stage::Response)
        .into_iter()
        .map(|r| Ok(serde_json::from_value(r.payload)?))
        .collect()
}

/// Sentinels and failed responses carry no source-language text, so they
/// pass through untranslated.
fn passthrough(response: &ModelResponse) -> Option<TranslatedResponse> {
    match response.status {
        ResponseStatus::RecitationSentinel | ResponseStatus::Error => Some(TranslatedResponse {
            prompt_id: response.prompt_id.clone(),
            model_id: response.model_id.clone(),
            language: response.language.clone(),
            source_status: response.status,
            text_en: response.text.clone(),
            per_sentence: Vec::new(),
            degeneration_flags: Vec::new(),
        }),
        _ => None,
    }
}

/// Translates every stored non-English response lacking a translation.
pub fn translate_store(
    store: &RunStore,
    client: &dyn TranslationClient,
    degeneration: &DegenerationConfig,
    max_in_flight: usize,
) -> Result<StageSummary> {
    let translator = Translator {
        client,
        segmenters: default_segmenters(),
        degeneration: degeneration.clone(),
    };
    let mut summary = StageSummary::default();
    let pending: Vec<ModelResponse> = responses(store)?
        .into_iter()
        .filter(|r| !r.language.is_english())
        .filter(|r| {
            let key = RecordKey::new(&r.model_id, &r.language, &r.prompt_id, Stage::Translation);
            let present = store.contains(&key);
            summary.skipped += present as usize;
            !present
        })
        .collect();
    for chunk in pending.chunks(max_in_flight.max(1) * 4) {
        let out = bounded_map(chunk, max_in_flight, |_, r| match passthrough(r) {
            Some(t) => Ok(t),
            None => translator
                .translate_response(r)
                .map_err(|e| e.for_prompt(&format!("{}/{}/{}", r.model_id, r.language, r.prompt_id))),
        });
        for result in out {
            let t = result?;
            let key = RecordKey::new(&t.model_id, &t.language, &t.prompt_id, Stage::Translation);
            summary.flagged += !t.degeneration_flags.is_empty() as usize;
            store.put(key, &t)?;
            summary.written += 1;
        }
    }
    Ok(summary)
}

/// Scores every (model, non-English language) in the store against the
/// model's English responses, storing per-prompt scores. Scores already in
/// the store are reused.
pub fn evaluate_store(store: &RunStore, evaluator: &dyn Evaluator) -> Result<Vec<ConsistencyResult>> {
    let all = responses(store)?;
    let mut english: BTreeMap<(String, String), ModelResponse> = BTreeMap::new();
    let mut groups: BTreeMap<(String, LanguageCode), Vec<ModelResponse>> = BTreeMap::new();
    for r in all {
        if r.language.is_english() {
            english.insert((r.model_id.clone(), r.prompt_id.clone()), r);
        } else {
            groups.entry((r.model_id.clone(), r.language.clone())).or_default().push(r);
        }
    }
    let stage = Stage::Score(evaluator.id().to_string());
    let mut results = Vec::new();
    for ((model_id, language), members) in groups {
        let mut missing = Vec::new();
        let mut per_prompt = BTreeMap::new();
        for r in &members {
            let Some(reference) = english.get(&(model_id.clone(), r.prompt_id.clone())) else {
                return Err(Error::MissingResponses(format!(
                    "model {model_id} has no English response for prompt {}",
                    r.prompt_id
                )));
            };
            if reference.status == ResponseStatus::Error {
                log::warn!("{model_id}/{}: English response failed, prompt skipped", r.prompt_id);
                continue;
            }
            let key = RecordKey::new(&model_id, &language, &r.prompt_id, stage.clone());
            if let Some(score) = store.get_payload::<EvaluatorScore>(&key)? {
                per_prompt.insert(r.prompt_id.clone(), score);
                continue;
            }
            let tkey = RecordKey::new(&model_id, &language, &r.prompt_id, Stage::Translation);
            let Some(translated) = store.get_payload::<TranslatedResponse>(&tkey)? else {
                missing.push(r.prompt_id.clone());
                continue;
            };
            let pair = ScoringPair::new(&r.prompt_id, &reference.text, &translated.text_en)
                .with_status(translated.source_status);
            let score = score_pair(evaluator, &pair)?;
            store.put(key, &score)?;
            per_prompt.insert(r.prompt_id.clone(), score);
        }
        if !missing.is_empty() {
            return Err(Error::MissingTranslations(format!(
                "model {model_id}, language {language}: {} response(s) untranslated (first: {}); run translate first",
                missing.len(),
                missing[0]
            )));
        }
        if per_prompt.is_empty() {
            continue;
        }
        results.push(aggregate(&model_id, &language, evaluator.id(), per_prompt)?);
    }
    Ok(results)
}

/// Rebuilds consistency results from stored scores of one evaluator.
pub fn stored_results(store: &RunStore, evaluator_id: &str) -> Result<Vec<ConsistencyResult>> {
    let mut groups: BTreeMap<(String, LanguageCode), BTreeMap<String, EvaluatorScore>> = BTreeMap::new();
    for r in store.records(&Stage::Score(evaluator_id.to_string())) {
        let score: EvaluatorScore = serde_json::from_value(r.payload)?;
        groups
            .entry((r.key.model_id, r.key.language))
            .or_default()
            .insert(r.key.prompt_id, score);
    }
    groups
        .into_iter()
        .map(|((m, l), per_prompt)| aggregate(&m, &l, evaluator_id, per_prompt))
        .collect()
}

/// Round-trips every stored ok English response through `language`.
pub fn selfcheck_store(
    store: &RunStore,
    language: &LanguageCode,
    client: &dyn TranslationClient,
    evaluator: &dyn Evaluator,
) -> Result<ConsistencyResult> {
    let texts: Vec<String> = responses(store)?
        .into_iter()
        .filter(|r| r.language.is_english() && r.status == ResponseStatus::Ok)
        .map(|r| r.text)
        .collect();
    if texts.is_empty() {
        return Err(Error::MissingResponses("no ok English responses in the store".into()));
    }
    Translator::new(client).self_check(&texts, language, evaluator)
}
