//! Evaluators by id.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use crate::config::RunConfig;
use crate::consistency::Evaluator;
use crate::empathy::{EmpathyEvaluator, HttpClassifier};
use crate::error::{Error, Result};
use crate::generation::HttpGenerationClient;
use crate::heuristic::{BleuEvaluator, ExactMatch, RougeLEvaluator, RougeNEvaluator};
use crate::info::InfoConsistencyEvaluator;
use crate::judge::LlmJudgeBackend;
use crate::transport::{HttpTransport, JsonTransport};

/// Builds the transport for an endpoint with an optional credential variable.
pub type TransportFactory = dyn Fn(Option<&str>) -> Arc<dyn JsonTransport> + Send + Sync;

/// Real HTTP transports with bearer tokens read from the environment.
pub fn http_transports() -> Box<TransportFactory> {
    Box::new(|key_env| {
        Arc::new(HttpTransport::new(Duration::from_secs(120)).with_token_from_env(key_env))
            as Arc<dyn JsonTransport>
    })
}

#[derive(Clone, Default)]
pub struct EvaluatorRegistry {
    evaluators: BTreeMap<String, Arc<dyn Evaluator>>,
}

impl EvaluatorRegistry {
    /// Metric evaluators plus the rule-based info and empathy evaluators.
    pub fn builtin() -> Self {
        let mut r = Self::default();
        r.register(Arc::new(ExactMatch));
        r.register(Arc::new(BleuEvaluator::default()));
        r.register(Arc::new(RougeNEvaluator::new(1)));
        r.register(Arc::new(RougeNEvaluator::new(2)));
        r.register(Arc::new(RougeLEvaluator));
        r.register(Arc::new(InfoConsistencyEvaluator::default()));
        r.register(Arc::new(EmpathyEvaluator::default()));
        r
    }

    /// Built-ins, with the info and empathy evaluators switched to the
    /// remote judge and classifier when the config names them.
    pub fn from_config(config: &RunConfig, transports: &TransportFactory) -> Result<Self> {
        let mut r = Self::builtin();
        if let Some(judge) = &config.judge {
            let (extraction, verification) = config.judge_templates()?;
            let client = HttpGenerationClient::new(
                judge.endpoint.clone(),
                transports(judge.api_key_env.as_deref()),
            );
            let backend = LlmJudgeBackend::new(Arc::new(client), judge.model_id.clone())
                .with_templates(extraction, verification)
                .with_retry(config.retry.clone());
            r.register(Arc::new(
                InfoConsistencyEvaluator::new(Arc::new(backend))
                    .with_max_in_flight(config.concurrency.judge),
            ));
        }
        if let Some(c) = &config.classifier {
            let mut backend = HttpClassifier::new(c.endpoint.clone(), transports(c.api_key_env.as_deref()))
                .with_retry(config.retry.clone());
            if let Some(batch) = &c.batch_endpoint {
                backend = backend.with_batch_endpoint(batch.clone());
            }
            r.register(Arc::new(EmpathyEvaluator::new(Arc::new(backend))));
        }
        Ok(r)
    }

    pub fn register(&mut self, evaluator: Arc<dyn Evaluator>) {
        self.evaluators.insert(evaluator.id().to_string(), evaluator);
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn Evaluator>> {
        self.evaluators
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownEvaluator(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.evaluators.keys().map(String::as_str)
    }
}
