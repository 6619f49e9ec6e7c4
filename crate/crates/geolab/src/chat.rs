//! Chat-completion client abstraction shared by the agent policy, the
//! LLM judges, and the LLM page generator.
//!
//! The wire contract is the common chat-completion JSON shape: messages in,
//! either plain text or a tool call out. Tests use [`ScriptedChatClient`];
//! live runs use [`HttpChatClient`] against any compatible endpoint.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
}

/// A tool the model may call, described with a JSON-schema parameter object.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub tools: Vec<ToolSpec>,
    pub temperature: f64,
}

/// Model output: either assistant text or a single tool invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChatOutcome {
    Text(String),
    ToolCall { name: String, arguments: Value },
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatOutcome>;

    /// Identifier recorded in provenance fields (model name or fixture tag).
    fn model_name(&self) -> String;
}

/// Replays a fixed sequence of outcomes. Used by every offline test that
/// exercises an LLM-backed code path.
pub struct ScriptedChatClient {
    label: String,
    outcomes: Mutex<VecDeque<ChatOutcome>>,
}

impl ScriptedChatClient {
    pub fn new(label: impl Into<String>, outcomes: Vec<ChatOutcome>) -> Self {
        Self {
            label: label.into(),
            outcomes: Mutex::new(outcomes.into()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.outcomes.lock().unwrap().len()
    }
}

impl ChatClient for ScriptedChatClient {
    fn complete(&self, _request: &ChatRequest) -> Result<ChatOutcome> {
        self.outcomes
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| Error::transport("scripted chat client exhausted", false))
    }

    fn model_name(&self) -> String {
        self.label.clone()
    }
}

/// Chat backend configuration (endpoint, model, retry policy).
///
/// The API key is read from the environment variable named in `api_key_env`,
/// never from configuration files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatBackendConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_temperature() -> f64 {
    0.0
}
fn default_api_key_env() -> String {
    "GEOLAB_API_KEY".into()
}
fn default_max_retries() -> u32 {
    3
}
fn default_timeout_secs() -> u64 {
    120
}

/// Client for any chat-completion HTTP API with tool calling.
pub struct HttpChatClient {
    config: ChatBackendConfig,
    client: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(config: ChatBackendConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::transport(format!("building http client: {e}"), false))?;
        Ok(Self { config, client })
    }

    fn request_body(&self, request: &ChatRequest) -> Value {
        let tools: Vec<Value> = request
            .tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.parameters,
                    }
                })
            })
            .collect();
        let mut body = json!({
            "model": self.config.model,
            "temperature": request.temperature,
            "messages": request.messages,
        });
        if !tools.is_empty() {
            body["tools"] = Value::Array(tools);
        }
        body
    }

    fn parse_response(&self, body: &Value) -> Result<ChatOutcome> {
        let message = body
            .pointer("/choices/0/message")
            .ok_or_else(|| Error::Protocol("chat response missing choices[0].message".into()))?;
        if let Some(call) = message.pointer("/tool_calls/0/function") {
            let name = call
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Protocol("tool call missing function name".into()))?
                .to_string();
            let raw_args = call.get("arguments").cloned().unwrap_or(Value::Null);
            let arguments = match raw_args {
                Value::String(s) => serde_json::from_str(&s)
                    .map_err(|e| Error::Protocol(format!("tool arguments not valid JSON: {e}")))?,
                other => other,
            };
            return Ok(ChatOutcome::ToolCall { name, arguments });
        }
        let content = message
            .get("content")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        Ok(ChatOutcome::Text(content))
    }

    fn complete_once(&self, request: &ChatRequest) -> Result<ChatOutcome> {
        let mut req = self
            .client
            .post(&self.config.endpoint)
            .json(&self.request_body(request));
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            if !key.is_empty() {
                req = req.bearer_auth(key);
            }
        }
        let resp = req
            .send()
            .map_err(|e| Error::transport(format!("chat request failed: {e}"), true))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Error::transport(format!("chat backend returned {status}"), true));
        }
        if !status.is_success() {
            return Err(Error::transport(format!("chat backend returned {status}"), false));
        }
        let body: Value = resp
            .json()
            .map_err(|e| Error::Protocol(format!("chat response not JSON: {e}")))?;
        self.parse_response(&body)
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatOutcome> {
        let mut last_err = None;
        for attempt in 0..=self.config.max_retries {
            match self.complete_once(request) {
                Ok(outcome) => return Ok(outcome),
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    std::thread::sleep(Duration::from_millis(200 * (attempt as u64 + 1)));
                    last_err = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.unwrap_or_else(|| Error::transport("chat retries exhausted", false)))
    }

    fn model_name(&self) -> String {
        self.config.model.clone()
    }
}

/// Interpret a judge-style reply as a boolean. Accepts `True`/`False` with
/// surrounding whitespace or trailing punctuation, case-insensitively.
pub fn parse_bool_verdict(text: &str) -> Option<bool> {
    let t = text.trim().trim_end_matches(['.', '!']).trim();
    if t.eq_ignore_ascii_case("true") {
        Some(true)
    } else if t.eq_ignore_ascii_case("false") {
        Some(false)
    } else {
        None
    }
}
