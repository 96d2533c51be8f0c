//! Chat-completion client for hosted models.

use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{check_history, BackendError, ChatBackend, ChatReply, ChatTurn, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HttpChatConfig {
    /// Full endpoint URL, e.g. `https://host/v1/chat/completions`.
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_ms: u64,
    /// Extra attempts after a 5xx or transport failure.
    pub max_retries: u32,
    pub temperature: f64,
}

impl HttpChatConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self { url: url.into(), model: model.into(), api_key: None, timeout_ms: 60_000, max_retries: 2, temperature: 0.0 }
    }

    /// Reads `MSSR_CHAT_URL`, `MSSR_CHAT_MODEL` and `MSSR_API_KEY`.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var("MSSR_CHAT_URL").ok()?;
        let model = std::env::var("MSSR_CHAT_MODEL").unwrap_or_else(|_| "gpt-4o".into());
        let mut cfg = Self::new(url, model);
        cfg.api_key = std::env::var("MSSR_API_KEY").ok().filter(|k| !k.is_empty());
        Some(cfg)
    }
}

pub struct HttpChatBackend {
    config: HttpChatConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Done(String),
    Retry(BackendError),
    Fail(BackendError),
}

impl HttpChatBackend {
    pub fn new(config: HttpChatConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &HttpChatConfig {
        &self.config
    }

    fn body(&self, history: &[ChatTurn]) -> Value {
        let messages: Vec<Value> = history
            .iter()
            .map(|t| {
                if t.images.is_empty() {
                    return json!({ "role": t.role.to_string(), "content": t.text });
                }
                let mut parts = vec![json!({ "type": "text", "text": t.text })];
                for png in &t.images {
                    let b64 = base64::engine::general_purpose::STANDARD.encode(png);
                    parts.push(json!({ "type": "image_url", "image_url": { "url": format!("data:image/png;base64,{b64}") } }));
                }
                json!({ "role": t.role.to_string(), "content": parts })
            })
            .collect();
        json!({ "model": self.config.model, "messages": messages, "temperature": self.config.temperature })
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut req = self.agent.post(&self.config.url);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(BackendError::Timeout(self.config.timeout_ms)),
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(BackendError::Timeout(self.config.timeout_ms)),
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        if status >= 500 {
            return Attempt::Retry(BackendError::Transport(format!("server answered {status}")));
        }
        if status >= 400 {
            return Attempt::Fail(BackendError::Protocol(format!("server answered {status}: {}", truncate(&text))));
        }
        match extract_content(&text) {
            Some(c) => Attempt::Done(c),
            None => Attempt::Fail(BackendError::Protocol(format!("no message content in {}", truncate(&text)))),
        }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

/// `choices[0].message.content`, accepting either a string or text parts.
fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    let content = v.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            Some(parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect::<Vec<_>>().join(""))
        }
        _ => None,
    }
}

impl ChatBackend for HttpChatBackend {
    fn chat(&self, history: &[ChatTurn]) -> Result<ChatReply> {
        check_history(history)?;
        let body = self.body(history);
        log::trace!("chat request to {} with {} turns", self.config.url, history.len());
        let mut retries = 0;
        loop {
            match self.attempt(&body) {
                Attempt::Done(text) => return Ok(ChatReply { text, retries }),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if retries >= self.config.max_retries => return Err(e),
                Attempt::Retry(e) => {
                    log::warn!("chat attempt {} failed: {e}", retries + 1);
                    retries += 1;
                }
            }
        }
    }
}
