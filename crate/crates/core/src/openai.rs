//! Minimal blocking client for OpenAI-compatible `chat/completions` and
//! `completions` endpoints, with bounded retries on transport failures.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL up to and including the API version, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_max_tokens() -> u32 {
    256
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: None,
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            timeout_secs: default_timeout_secs(),
            max_tokens: default_max_tokens(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingKey(String),
}

impl ClientError {
    pub fn is_retriable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Clone)]
pub struct OpenAiClient {
    cfg: EndpointConfig,
    agent: ureq::Agent,
    key: Option<String>,
}

impl std::fmt::Debug for OpenAiClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiClient")
            .field("base_url", &self.cfg.base_url)
            .field("model", &self.cfg.model)
            .finish()
    }
}

impl OpenAiClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self, ClientError> {
        let key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ClientError::MissingKey(var.clone()))?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { cfg, agent, key })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn post_once(&self, path: &str, body: &Value) -> Result<Value, ClientError> {
        let url = format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), path);
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(k) = &self.key {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ClientError::Status { status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| ClientError::Protocol(format!("invalid JSON body: {e}")))
    }

    /// POST with up to `retries` extra attempts on retriable failures,
    /// doubling the wait each time.
    pub fn post(&self, path: &str, body: &Value) -> Result<Value, ClientError> {
        let mut attempt = 0;
        loop {
            match self.post_once(path, body) {
                Err(e) if e.is_retriable() && attempt < self.cfg.retries => {
                    let wait = self.cfg.backoff_ms.saturating_mul(1 << attempt.min(16));
                    tracing::debug!(attempt, wait, error = %e, "retrying request");
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    /// Greedy chat completion; reasoning spans are stripped from the reply.
    pub fn chat(&self, messages: &[ChatMessage]) -> Result<String, ClientError> {
        let body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": 0.0,
            "max_tokens": self.cfg.max_tokens,
        });
        let v = self.post("chat/completions", &body)?;
        let content = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ClientError::Protocol("missing choices[0].message.content".into()))?;
        Ok(strip_think(content))
    }

    /// Raw `completions` call; the caller supplies style-specific fields.
    pub fn completions(&self, mut body: Value) -> Result<Value, ClientError> {
        if let Some(obj) = body.as_object_mut() {
            obj.entry("model").or_insert_with(|| json!(self.cfg.model));
        }
        self.post("completions", &body)
    }
}

/// Removes `<think>...</think>` spans (an unterminated span runs to the end).
pub fn strip_think(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("<think>") {
        out.push_str(&rest[..start]);
        match rest[start..].find("</think>") {
            Some(end) => rest = &rest[start + end + "</think>".len()..],
            None => {
                rest = "";
                break;
            }
        }
    }
    out.push_str(rest);
    out.trim().to_string()
}
