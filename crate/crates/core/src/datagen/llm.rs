//! Chat-completion client.
//!
//! Contract: `POST <endpoint>` with
//! `{"model": str, "messages": [{"role": "system"|"user", "content": str}], "temperature": f32}`.
//! The reply text is read from `choices[0].message.content`
//! (chat-completions style) or from a top-level `text` field. A bearer token
//! is read from [`LLM_API_KEY_ENV`].

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::JsonClient;

pub const LLM_API_KEY_ENV: &str = "FGR_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
}

impl LlmRequest {
    pub fn new(model: &str, system: &str, user: &str, temperature: f32) -> Self {
        Self {
            model: model.to_owned(),
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: system.to_owned(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: user.to_owned(),
                },
            ],
            temperature,
        }
    }
}

/// Text completion. All sampling nondeterminism lives behind this trait.
pub trait LlmClient: Send + Sync {
    fn complete(&self, req: &LlmRequest) -> Result<String>;
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LlmResponse {
    Chat { choices: Vec<Choice> },
    Plain { text: String },
}

pub struct HttpLlmClient {
    endpoint: String,
    client: JsonClient,
    audit: Option<Mutex<BufWriter<File>>>,
}

impl HttpLlmClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, retries: u32) -> Self {
        let api_key = std::env::var(LLM_API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self {
            endpoint: endpoint.into(),
            client: JsonClient::new(timeout, retries, api_key),
            audit: None,
        }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.client.set_backoff(backoff);
        self
    }

    /// Appends every request with its response or error to a JSON-lines log.
    pub fn with_audit_log(mut self, path: &Path) -> Result<Self> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        self.audit = Some(Mutex::new(BufWriter::new(f)));
        Ok(self)
    }

    fn log(&self, req: &LlmRequest, outcome: &Result<String>) {
        let Some(audit) = &self.audit else { return };
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or_default();
        let rec = match outcome {
            Ok(text) => serde_json::json!({"ts": ts, "request": req, "response": text}),
            Err(e) => serde_json::json!({"ts": ts, "request": req, "error": e.to_string()}),
        };
        let mut w = audit.lock().expect("audit log poisoned");
        if let Err(e) = writeln!(w, "{rec}").and_then(|_| w.flush()) {
            tracing::warn!("cannot write audit log: {e}");
        }
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, req: &LlmRequest) -> Result<String> {
        let outcome = self
            .client
            .post::<_, LlmResponse>(&self.endpoint, req)
            .and_then(|r| match r {
                LlmResponse::Chat { choices } => choices
                    .into_iter()
                    .next()
                    .map(|c| c.message.content)
                    .ok_or_else(|| Error::Transport("response has no choices".into())),
                LlmResponse::Plain { text } => Ok(text),
            });
        self.log(req, &outcome);
        outcome
    }
}
