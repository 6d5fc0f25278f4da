//! Blocking client for the `/chat/completions` wire format.

use std::io::ErrorKind;
use std::time::Duration;

use rand::Rng;
use serde_json::{json, Value};

use super::{BackendConfig, BackendError};
use crate::prompt::{render_messages, PromptBundle};

const BODY_EXCERPT: usize = 300;

/// Request body for one bundle.
pub fn request_body(bundle: &PromptBundle, config: &BackendConfig) -> Value {
    json!({
        "model": config.model_name,
        "messages": render_messages(bundle),
        "temperature": config.temperature,
    })
}

pub(crate) fn completions_url(endpoint: &str) -> String {
    format!("{}/chat/completions", endpoint.trim_end_matches('/'))
}

fn excerpt(body: &str) -> String {
    let mut s: String = body.chars().take(BODY_EXCERPT).collect();
    if body.chars().count() > BODY_EXCERPT {
        s.push('…');
    }
    s
}

fn is_timeout(err: &ureq::Transport) -> bool {
    use std::error::Error as _;
    let mut source = err.source();
    while let Some(e) = source {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            if matches!(io.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) {
                return true;
            }
        }
        source = e.source();
    }
    err.to_string().contains("timed out")
}

/// Extracts `choices[0].message.content`, trimmed.
pub fn parse_completion(body: &Value) -> Result<String, BackendError> {
    let content = body
        .pointer("/choices/0/message/content")
        .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))?;
    match content {
        Value::String(s) if s.trim().is_empty() => Err(BackendError::EmptyCompletion),
        Value::String(s) => Ok(s.trim().to_string()),
        Value::Null => Err(BackendError::EmptyCompletion),
        other => Err(BackendError::MalformedResponse(format!(
            "content is not a string: {other}"
        ))),
    }
}

pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    api_key: String,
}

impl HttpBackend {
    pub(crate) fn new(config: &BackendConfig) -> Result<Self, BackendError> {
        let endpoint = config
            .endpoint_url
            .as_deref()
            .ok_or_else(|| BackendError::Config("http backend needs an endpoint url".into()))?;
        let api_key = config
            .api_key
            .clone()
            .ok_or_else(|| BackendError::Config(format!("{} is not set", super::API_KEY_ENV)))?;
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Ok(Self {
            agent,
            url: completions_url(endpoint),
            api_key,
        })
    }

    fn send_once(&self, body: &Value) -> Result<String, BackendError> {
        let response = self
            .agent
            .post(&self.url)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .set("Content-Type", "application/json")
            .send_json(body.clone());
        match response {
            Ok(resp) => {
                let text = resp.into_string().map_err(|e| BackendError::Transport(e.to_string()))?;
                let value: Value = serde_json::from_str(&text)
                    .map_err(|e| BackendError::MalformedResponse(format!("{e}: {}", excerpt(&text))))?;
                parse_completion(&value)
            }
            Err(ureq::Error::Status(status, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                if status == 401 || status == 403 {
                    Err(BackendError::Auth { status })
                } else {
                    Err(BackendError::Status {
                        status,
                        body: excerpt(&body),
                    })
                }
            }
            Err(ureq::Error::Transport(t)) if is_timeout(&t) => Err(BackendError::Timeout),
            Err(ureq::Error::Transport(t)) => Err(BackendError::Transport(t.to_string())),
        }
    }

    /// Sends `bundle`, retrying retryable failures with exponential backoff.
    /// Returns the completion and the number of requests made.
    pub(crate) fn complete(
        &self,
        bundle: &PromptBundle,
        config: &BackendConfig,
    ) -> Result<(String, u32), BackendError> {
        let body = request_body(bundle, config);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match self.send_once(&body) {
                Ok(text) => return Ok((text, attempt)),
                Err(e) if e.is_retryable() && attempt <= config.max_retries => {
                    let delay = backoff_delay(config.backoff_base, attempt);
                    log::warn!("attempt {attempt} failed ({e}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// `base · 2^(attempt-1)` scaled by a random factor in `[1, 1.25)`.
pub(crate) fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    let exp = base.saturating_mul(1u32 << (attempt - 1).min(16));
    let jitter: f64 = rand::thread_rng().gen_range(1.0..1.25);
    exp.mul_f64(jitter)
}
