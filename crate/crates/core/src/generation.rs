//! Chat-style generation client used for evaluated models and the claim judge.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::transport::{JsonTransport, TransportError};

/// Decoding settings for an evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub temperature: f64,
    pub top_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: None,
            system_prompt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Request body of the generation wire contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl GenerationRequest {
    pub fn new(prompt_text: &str, model_id: &str, params: &DecodeParams) -> Self {
        let mut messages = Vec::new();
        if let Some(system) = &params.system_prompt {
            messages.push(ChatMessage {
                role: "system".into(),
                content: system.clone(),
            });
        }
        messages.push(ChatMessage {
            role: "user".into(),
            content: prompt_text.to_string(),
        });
        Self {
            model: model_id.to_string(),
            messages,
            temperature: params.temperature,
            top_p: params.top_p,
            max_tokens: params.max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub text: String,
    #[serde(default)]
    pub finish_reason: String,
}

/// Provider failures, normalized into categories the collector treats
/// differently.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GenerationError {
    #[error("rate limited: {0}")]
    RateLimited(String),
    /// The provider refused to return content (e.g. `RECITATION`).
    #[error("content blocked ({category})")]
    ContentBlocked { category: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("provider error: {0}")]
    Provider(String),
}

impl GenerationError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GenerationError::RateLimited(_) | GenerationError::Transport(_))
    }
}

pub trait GenerationClient: Send + Sync {
    fn generate(
        &self,
        prompt_text: &str,
        model_id: &str,
        params: &DecodeParams,
    ) -> Result<GenerationOutput, GenerationError>;
}

/// Finish reasons that mean the provider withheld the content.
const BLOCK_REASONS: [&str; 4] = ["RECITATION", "SAFETY", "content_filter", "BLOCKLIST"];

/// Speaks the generation wire contract:
/// `{model, messages, temperature, top_p, max_tokens}` → `{text, finish_reason}`.
///
/// Content blocks arrive either as a finish reason from [`BLOCK_REASONS`] or
/// as an error body `{"error": {"type": "content_block", "category": ...}}`.
pub struct HttpGenerationClient {
    endpoint: String,
    transport: Arc<dyn JsonTransport>,
}

impl HttpGenerationClient {
    pub fn new(endpoint: impl Into<String>, transport: Arc<dyn JsonTransport>) -> Self {
        Self {
            endpoint: endpoint.into(),
            transport,
        }
    }
}

fn content_block_category(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    let err = v.get("error")?;
    if err.get("type")?.as_str()? != "content_block" {
        return None;
    }
    Some(
        err.get("category")
            .and_then(Value::as_str)
            .unwrap_or("content_block")
            .to_string(),
    )
}

impl GenerationClient for HttpGenerationClient {
    fn generate(
        &self,
        prompt_text: &str,
        model_id: &str,
        params: &DecodeParams,
    ) -> Result<GenerationOutput, GenerationError> {
        let request = GenerationRequest::new(prompt_text, model_id, params);
        let body = serde_json::to_value(&request).map_err(|e| GenerationError::Provider(e.to_string()))?;
        let reply = self.transport.post_json(&self.endpoint, &body).map_err(|e| match e {
            TransportError::RateLimited(m) => GenerationError::RateLimited(m),
            TransportError::Status { status, body } => match content_block_category(&body) {
                Some(category) => GenerationError::ContentBlocked { category },
                None if status >= 500 => GenerationError::Transport(format!("HTTP {status}: {body}")),
                None => GenerationError::Provider(format!("HTTP {status}: {body}")),
            },
            TransportError::Io(m) => GenerationError::Transport(m),
            TransportError::Decode(m) => GenerationError::Provider(m),
        })?;
        let output: GenerationOutput = serde_json::from_value(reply.clone())
            .map_err(|e| GenerationError::Provider(format!("{e}: {reply}")))?;
        if BLOCK_REASONS.contains(&output.finish_reason.as_str()) {
            return Err(GenerationError::ContentBlocked {
                category: output.finish_reason,
            });
        }
        Ok(output)
    }
}
