//! Claim extraction and verification through a generation endpoint.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BackendError, Error, Result};
use crate::generation::{DecodeParams, GenerationClient};
use crate::info::{Claim, ClaimJudgeBackend, SupportVerdict};
use crate::transport::RetryPolicy;

pub const DEFAULT_EXTRACTION_TEMPLATE: &str = include_str!("../templates/extract_claims.txt");
pub const DEFAULT_VERIFICATION_TEMPLATE: &str = include_str!("../templates/verify_claim.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            body: body.into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("template")
            .to_string();
        Ok(Self { id, body })
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.body.as_bytes()))
    }

    fn fill(&self, slots: &[(&str, &str)]) -> String {
        slots
            .iter()
            .fold(self.body.clone(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
    }
}

/// The judge wire request: which template was filled and the final prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub template_id: String,
    pub filled_prompt: String,
}

/// Reads a verdict token. Case and surrounding punctuation are ignored and
/// only the start of the reply counts.
pub fn parse_verdict(raw: &str) -> Option<bool> {
    let head = raw
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    if head.starts_with("unsupported") || head.starts_with("not supported") {
        Some(false)
    } else if head.starts_with("supported") {
        Some(true)
    } else {
        None
    }
}

/// One claim per non-empty line, list markers stripped. A lone `NONE` means
/// no claims; an empty reply is malformed.
pub fn parse_claim_lines(raw: &str) -> Option<Vec<String>> {
    let lines: Vec<String> = raw
        .lines()
        .map(|line| {
            let line = line.trim();
            let line = line.trim_start_matches(['-', '*', '\u{2022}']).trim_start();
            let digits = line.chars().take_while(char::is_ascii_digit).count();
            let rest = &line[digits..];
            if digits > 0 && (rest.starts_with('.') || rest.starts_with(')')) {
                rest[1..].trim().to_string()
            } else {
                line.to_string()
            }
        })
        .filter(|l| !l.is_empty())
        .collect();
    match lines.as_slice() {
        [] => None,
        [only] if only.trim_end_matches('.').eq_ignore_ascii_case("none") => Some(Vec::new()),
        _ => Some(lines),
    }
}

fn locate(haystack: &str, needle: &str) -> (usize, usize) {
    match haystack.find(needle) {
        Some(byte) => {
            let start = haystack[..byte].chars().count();
            (start, start + needle.chars().count())
        }
        None => (0, haystack.chars().count()),
    }
}

/// Judge backed by an open-weight model behind the generation contract.
/// Verdicts are memoized per (claim, reference).
pub struct LlmJudgeBackend {
    client: Arc<dyn GenerationClient>,
    model_id: String,
    params: DecodeParams,
    extraction: PromptTemplate,
    verification: PromptTemplate,
    retry: RetryPolicy,
    verdicts: Mutex<HashMap<(String, String), bool>>,
}

impl LlmJudgeBackend {
    pub fn new(client: Arc<dyn GenerationClient>, model_id: impl Into<String>) -> Self {
        Self {
            client,
            model_id: model_id.into(),
            params: DecodeParams::default(),
            extraction: PromptTemplate::new("extract_claims", DEFAULT_EXTRACTION_TEMPLATE),
            verification: PromptTemplate::new("verify_claim", DEFAULT_VERIFICATION_TEMPLATE),
            retry: RetryPolicy::default(),
            verdicts: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_templates(mut self, extraction: PromptTemplate, verification: PromptTemplate) -> Self {
        self.extraction = extraction;
        self.verification = verification;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn call(&self, request: &JudgeRequest) -> Result<String, BackendError> {
        log::trace!("judge request with template {}", request.template_id);
        let out = self.retry.run(
            |_| self.client.generate(&request.filled_prompt, &self.model_id, &self.params),
            |e| e.is_retryable(),
        )?;
        Ok(out.text)
    }

    /// Calls the judge, re-asking once if the reply does not parse.
    fn ask<T>(
        &self,
        request: JudgeRequest,
        parse: impl Fn(&str) -> Option<T>,
        what: &str,
    ) -> Result<T, BackendError> {
        let mut raw = String::new();
        for _ in 0..2 {
            raw = self.call(&request)?;
            if let Some(v) = parse(&raw) {
                return Ok(v);
            }
        }
        Err(BackendError::Parse {
            message: format!("{what} reply did not match the expected format"),
            raw,
        })
    }
}

impl ClaimJudgeBackend for LlmJudgeBackend {
    fn extract(&self, text: &str) -> Result<Vec<Claim>, BackendError> {
        if text.trim().is_empty() {
            return Ok(Vec::new());
        }
        let request = JudgeRequest {
            template_id: self.extraction.id.clone(),
            filled_prompt: self.extraction.fill(&[("text", text)]),
        };
        let lines = self.ask(request, parse_claim_lines, "extraction")?;
        Ok(lines
            .into_iter()
            .map(|line| Claim {
                source_span: locate(text, &line),
                text: line,
            })
            .collect())
    }

    fn verify(&self, claim: &Claim, reference: &str) -> Result<SupportVerdict, BackendError> {
        let key = (claim.text.clone(), reference.to_string());
        let cached = self.verdicts.lock().expect("verdict cache poisoned").get(&key).copied();
        let supported = match cached {
            Some(v) => v,
            None => {
                let request = JudgeRequest {
                    template_id: self.verification.id.clone(),
                    filled_prompt: self
                        .verification
                        .fill(&[("claim", &claim.text), ("reference", reference)]),
                };
                let v = self.ask(request, parse_verdict, "verification")?;
                self.verdicts.lock().expect("verdict cache poisoned").insert(key, v);
                v
            }
        };
        Ok(SupportVerdict {
            claim: claim.clone(),
            supported,
            rationale: None,
        })
    }
}
