//! JSON-over-HTTP transport shared by the generation, translation, judge and
//! classifier clients.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("rate limited (HTTP 429): {0}")]
    RateLimited(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("connection failed: {0}")]
    Io(String),
    #[error("malformed response: {0}")]
    Decode(String),
}

impl TransportError {
    /// Rate limits, server errors and connection failures are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::RateLimited(_) | TransportError::Io(_) => true,
            TransportError::Status { status, .. } => *status >= 500,
            TransportError::Decode(_) => false,
        }
    }
}

/// Posts a JSON body and returns the decoded JSON reply of a 2xx response.
pub trait JsonTransport: Send + Sync {
    fn post_json(&self, url: &str, body: &Value) -> Result<Value, TransportError>;
}

impl<F> JsonTransport for F
where
    F: Fn(&str, &Value) -> Result<Value, TransportError> + Send + Sync,
{
    fn post_json(&self, url: &str, body: &Value) -> Result<Value, TransportError> {
        self(url, body)
    }
}

pub struct HttpTransport {
    agent: ureq::Agent,
    bearer_token: Option<String>,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            bearer_token: None,
        }
    }

    /// Reads a bearer token from `var`; a missing variable leaves requests
    /// unauthenticated.
    pub fn with_token_from_env(mut self, var: Option<&str>) -> Self {
        self.bearer_token = var.and_then(|v| std::env::var(v).ok());
        self
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl JsonTransport for HttpTransport {
    fn post_json(&self, url: &str, body: &Value) -> Result<Value, TransportError> {
        let mut request = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = &self.bearer_token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let payload = serde_json::to_vec(body).map_err(|e| TransportError::Decode(e.to_string()))?;
        let mut response = request
            .send(&payload[..])
            .map_err(|e| TransportError::Io(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Io(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| TransportError::Decode(format!("{e}: {text}"))),
            429 => Err(TransportError::RateLimited(text)),
            _ => Err(TransportError::Status { status, body: text }),
        }
    }
}

/// Exponential backoff with optional jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_attempts: 1,
            ..Self::immediate(1)
        }
    }

    /// Retries without sleeping; for tests and local mocks.
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay_ms: 0,
            max_delay_ms: 0,
            jitter: false,
        }
    }

    pub fn delay_for(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.saturating_sub(1).min(20))
            .min(self.max_delay_ms);
        let ms = if self.jitter && exp > 0 {
            rand::rng().random_range(exp / 2..=exp)
        } else {
            exp
        };
        Duration::from_millis(ms)
    }

    /// Runs `op` until it succeeds, returns a non-retryable error, or the
    /// attempt budget is spent. `op` receives the 1-based attempt number.
    pub fn run<T, E>(
        &self,
        mut op: impl FnMut(u32) -> Result<T, E>,
        retryable: impl Fn(&E) -> bool,
    ) -> Result<T, E> {
        let attempts = self.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if attempt < attempts && retryable(&e) => {
                    let delay = self.delay_for(attempt);
                    if !delay.is_zero() {
                        log::debug!("attempt {attempt} failed, retrying in {delay:?}");
                        std::thread::sleep(delay);
                    }
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn retries_only_retryable_errors() {
        let calls = Cell::new(0);
        let r: Result<(), TransportError> = RetryPolicy::immediate(3).run(
            |_| {
                calls.set(calls.get() + 1);
                Err(TransportError::RateLimited("slow down".into()))
            },
            TransportError::is_retryable,
        );
        assert!(r.is_err());
        assert_eq!(calls.get(), 3);

        calls.set(0);
        let r: Result<(), TransportError> = RetryPolicy::immediate(3).run(
            |_| {
                calls.set(calls.get() + 1);
                Err(TransportError::Status {
                    status: 400,
                    body: String::new(),
                })
            },
            TransportError::is_retryable,
        );
        assert!(r.is_err());
        assert_eq!(calls.get(), 1);
    }

    #[test]
    fn succeeds_after_transient_failure() {
        let r = RetryPolicy::immediate(3).run(
            |attempt| {
                if attempt < 2 {
                    Err(TransportError::Io("reset".into()))
                } else {
                    Ok(attempt)
                }
            },
            TransportError::is_retryable,
        );
        assert_eq!(r, Ok(2));
    }

    #[test]
    fn backoff_is_capped_and_jittered() {
        let p = RetryPolicy::default();
        for attempt in 1..10 {
            let d = p.delay_for(attempt).as_millis() as u64;
            assert!(d <= p.max_delay_ms);
        }
        let d1 = p.delay_for(1).as_millis() as u64;
        assert!((250..=500).contains(&d1));
    }
}
