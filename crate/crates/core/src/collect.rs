//! Prompt-set loading and response collection into the run store.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use chrono::Utc;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::generation::{GenerationClient, GenerationError, HttpGenerationClient};
use crate::lang::LanguageCode;
use crate::parallel::bounded_map;
use crate::registry::TransportFactory;
use crate::store::{RecordKey, RunStore, Stage};
use crate::types::{AbstractPrompt, ModelResponse, ResponseStatus};

/// Reads a JSONL prompt set. Every prompt needs an English realization and
/// a unique id.
pub fn load_prompt_set(path: &Path) -> Result<Vec<AbstractPrompt>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, message: String| Error::PromptSet {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut seen = BTreeSet::new();
    let mut prompts = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let prompt: AbstractPrompt = serde_json::from_str(&line).map_err(|e| err(n, e.to_string()))?;
        if prompt.prompt_id.is_empty() {
            return Err(err(n, "empty prompt_id".into()));
        }
        match prompt.realization(&LanguageCode::english()) {
            Some(t) if !t.trim().is_empty() => {}
            _ => return Err(err(n, format!("prompt {:?} has no \"en\" realization", prompt.prompt_id))),
        }
        if !seen.insert(prompt.prompt_id.clone()) {
            return Err(err(n, format!("duplicate prompt_id {:?}", prompt.prompt_id)));
        }
        prompts.push(prompt);
    }
    Ok(prompts)
}

/// One planned generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlannedCall {
    pub model_id: String,
    pub language: LanguageCode,
    pub prompt_id: String,
}

/// Generations a collect run would issue, in issue order.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CollectPlan {
    pub calls: Vec<PlannedCall>,
    /// Calls skipped because the store already holds their records.
    pub already_stored: usize,
}

impl CollectPlan {
    pub fn total(&self) -> usize {
        self.calls.len() + self.already_stored
    }

    /// Pending counts per (model, language).
    pub fn counts(&self) -> BTreeMap<(String, String), usize> {
        let mut out = BTreeMap::new();
        for c in &self.calls {
            *out.entry((c.model_id.clone(), c.language.to_string())).or_insert(0) += 1;
        }
        out
    }
}

/// Lists every (model, language, prompt) in model, language, prompt order
/// and drops the ones already stored.
pub fn plan(config: &RunConfig, prompts: &[AbstractPrompt], store: Option<&RunStore>) -> Result<CollectPlan> {
    let languages = config.all_languages();
    for p in prompts {
        for l in &languages {
            if p.realization(l).is_none_or(|t| t.trim().is_empty()) {
                return Err(Error::MissingRealization {
                    prompt_id: p.prompt_id.clone(),
                    language: l.to_string(),
                });
            }
        }
    }
    let mut plan = CollectPlan::default();
    for m in &config.models {
        for l in &languages {
            for p in prompts {
                let key = RecordKey::new(&m.id, l, &p.prompt_id, Stage::Response);
                if store.is_some_and(|s| s.contains(&key)) {
                    plan.already_stored += 1;
                } else {
                    plan.calls.push(PlannedCall {
                        model_id: m.id.clone(),
                        language: l.clone(),
                        prompt_id: p.prompt_id.clone(),
                    });
                }
            }
        }
    }
    Ok(plan)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub planned: usize,
    pub skipped: usize,
    pub generated: usize,
    pub by_status: BTreeMap<String, usize>,
}

pub type GenerationClients = BTreeMap<String, Arc<dyn GenerationClient>>;

/// One HTTP client per configured model.
pub fn http_generation_clients(config: &RunConfig, transports: &TransportFactory) -> GenerationClients {
    config
        .models
        .iter()
        .map(|m| {
            let client = HttpGenerationClient::new(m.endpoint.clone(), transports(m.api_key_env.as_deref()));
            (m.id.clone(), Arc::new(client) as Arc<dyn GenerationClient>)
        })
        .collect()
}

fn respond(
    client: &dyn GenerationClient,
    config: &RunConfig,
    call: &PlannedCall,
    prompt_text: &str,
) -> ModelResponse {
    let params = &config.model(&call.model_id).expect("planned model exists").decode;
    let outcome = config.retry.run(
        |_| client.generate(prompt_text, &call.model_id, params),
        GenerationError::is_retryable,
    );
    let mut response = ModelResponse {
        prompt_id: call.prompt_id.clone(),
        model_id: call.model_id.clone(),
        language: call.language.clone(),
        text: String::new(),
        status: ResponseStatus::Error,
        created_at: Utc::now(),
        detail: None,
    };
    match outcome {
        Ok(out) if out.finish_reason == "refusal" => {
            response.status = ResponseStatus::Refused;
            response.text = out.text;
            response.detail = Some(out.finish_reason);
        }
        Ok(out) if out.text.trim().is_empty() => {
            response.detail = Some("empty completion".into());
        }
        Ok(out) => {
            response.status = ResponseStatus::Ok;
            response.text = out.text;
        }
        Err(GenerationError::ContentBlocked { category }) => {
            response = ModelResponse::recitation_sentinel(
                &call.prompt_id,
                &call.model_id,
                call.language.clone(),
                category,
            );
        }
        Err(e) => {
            log::warn!(
                "{} {} {}: {e}",
                call.model_id,
                call.language,
                call.prompt_id
            );
            response.detail = Some(e.to_string());
        }
    }
    response
}

/// Collects every missing response. Calls to one model run with at most
/// `concurrency.per_endpoint` in flight; records are written in plan order.
pub fn collect(
    config: &RunConfig,
    prompts: &[AbstractPrompt],
    clients: &GenerationClients,
    store: &RunStore,
) -> Result<RunSummary> {
    let plan = plan(config, prompts, Some(store))?;
    let by_id: BTreeMap<&str, &AbstractPrompt> = prompts.iter().map(|p| (p.prompt_id.as_str(), p)).collect();
    let mut summary = RunSummary {
        planned: plan.total(),
        skipped: plan.already_stored,
        ..Default::default()
    };
    let limit = config.concurrency.per_endpoint.max(1);
    for model in &config.models {
        let client = clients
            .get(&model.id)
            .ok_or_else(|| Error::Config(format!("no generation client for model {:?}", model.id)))?;
        let calls: Vec<&PlannedCall> = plan.calls.iter().filter(|c| c.model_id == model.id).collect();
        // chunking keeps partial progress on disk if a later write fails
        for chunk in calls.chunks(limit * 4) {
            let responses = bounded_map(chunk, limit, |_, call| {
                let text = by_id[call.prompt_id.as_str()]
                    .realization(&call.language)
                    .expect("plan checked realizations");
                respond(client.as_ref(), config, call, text)
            });
            for (call, response) in chunk.iter().zip(responses) {
                let key = RecordKey::new(&call.model_id, &call.language, &call.prompt_id, Stage::Response);
                store.put(key, &response)?;
                summary.generated += 1;
                *summary.by_status.entry(response.status.as_str().to_string()).or_insert(0) += 1;
            }
        }
    }
    Ok(summary)
}
