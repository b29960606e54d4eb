//! Chat-completion backends: an OpenAI-compatible HTTP client plus
//! record/replay transcripts keyed by a content hash of the prompt.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Sampling temperature used for every request.
pub const TEMPERATURE: f64 = 0.2;
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("request failed: {0}")]
    Transport(String),
    #[error("server returned {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unexpected completion payload: {0}")]
    Payload(String),
    #[error("no recorded response for prompt {key}")]
    MissingTranscript { key: String },
    #[error("transcript {path}: {reason}")]
    TranscriptFile { path: String, reason: String },
}

/// A reply that arrived but does not satisfy the requested output contract.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("malformed response ({reason}): {raw}")]
pub struct ResponseError {
    pub reason: String,
    pub raw: String,
}

impl ResponseError {
    pub fn new(reason: impl Into<String>, raw: &str) -> Self {
        Self {
            reason: reason.into(),
            raw: raw.to_string(),
        }
    }
}

/// Single-turn text completion.
pub trait ChatModel: Send {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError>;
}

/// Hex SHA-256 of the prompt text.
pub fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for OpenAiConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-2024-11-20".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 120,
        }
    }
}

pub struct OpenAiClient {
    cfg: OpenAiConfig,
    api_key: String,
    http: reqwest::blocking::Client,
}

impl OpenAiClient {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(cfg: OpenAiConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&cfg.api_key_env)
            .map_err(|_| LlmError::MissingApiKey(cfg.api_key_env.clone()))?;
        Self::with_key(cfg, api_key)
    }

    pub fn with_key(cfg: OpenAiConfig, api_key: String) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self { cfg, api_key, http })
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.cfg.base_url.trim_end_matches('/')
        )
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.cfg.model,
            "temperature": TEMPERATURE,
            "messages": [{"role": "user", "content": prompt}],
        })
    }
}

impl ChatModel for OpenAiClient {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError> {
        let resp = self
            .http
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(&self.request_body(prompt))
            .send()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Http {
                status: status.as_u16(),
                body,
            });
        }
        let v: Value = serde_json::from_str(&body).map_err(|e| LlmError::Payload(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Payload("missing choices[0].message.content".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key: String,
    pub prompt: String,
    pub response: String,
}

/// Ordered prompt/response log.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn push(&mut self, prompt: &str, response: &str) {
        self.entries.push(TranscriptEntry {
            key: prompt_key(prompt),
            prompt: prompt.to_string(),
            response: response.to_string(),
        });
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("transcript serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let err = |reason: String| LlmError::TranscriptFile {
            path: path.display().to_string(),
            reason,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_json_string())
    }
}

/// Answers prompts from a transcript without network access.
///
/// The n-th request for a given prompt gets the n-th recorded response for
/// that prompt; once those run out the last one is repeated.
pub struct ReplayChat {
    by_key: HashMap<String, Vec<String>>,
    cursor: HashMap<String, usize>,
}

impl ReplayChat {
    pub fn new(transcript: &Transcript) -> Self {
        let mut by_key: HashMap<String, Vec<String>> = HashMap::new();
        for e in &transcript.entries {
            by_key
                .entry(e.key.clone())
                .or_default()
                .push(e.response.clone());
        }
        Self {
            by_key,
            cursor: HashMap::new(),
        }
    }
}

impl ChatModel for ReplayChat {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError> {
        let key = prompt_key(prompt);
        let responses = self
            .by_key
            .get(&key)
            .ok_or_else(|| LlmError::MissingTranscript { key: key.clone() })?;
        let n = self.cursor.entry(key).or_insert(0);
        let out = responses[(*n).min(responses.len() - 1)].clone();
        *n += 1;
        Ok(out)
    }
}

/// Wraps another model and logs every successful exchange.
pub struct RecordingChat {
    inner: Box<dyn ChatModel>,
    log: Arc<Mutex<Transcript>>,
}

impl RecordingChat {
    pub fn new(inner: Box<dyn ChatModel>) -> Self {
        Self {
            inner,
            log: Arc::new(Mutex::new(Transcript::default())),
        }
    }

    /// Shared handle to the transcript being recorded.
    pub fn handle(&self) -> Arc<Mutex<Transcript>> {
        Arc::clone(&self.log)
    }
}

impl ChatModel for RecordingChat {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError> {
        let response = self.inner.complete(prompt)?;
        self.log
            .lock()
            .expect("transcript lock poisoned")
            .push(prompt, &response);
        Ok(response)
    }
}

/// Sends `prompt` and parses the reply, allowing one retry.
///
/// Returns `Ok(Err(reason))` when both attempts produced replies that failed
/// to parse (the caller then falls back), and `Err` when the second attempt
/// also failed at the transport level.
pub fn complete_with_retry<T>(
    chat: &mut dyn ChatModel,
    prompt: &str,
    parse: impl Fn(&str) -> Result<T, ResponseError>,
) -> Result<Result<T, String>, LlmError> {
    let mut last = None;
    for attempt in 0..2 {
        match chat.complete(prompt) {
            Ok(reply) => match parse(&reply) {
                Ok(v) => return Ok(Ok(v)),
                Err(e) => last = Some(e.reason),
            },
            Err(e) if attempt == 1 => return Err(e),
            Err(e) => last = Some(e.to_string()),
        }
    }
    Ok(Err(last.unwrap_or_default()))
}

/// Finds the first JSON object in `text` that has `key` at top level.
///
/// Tolerates surrounding prose and Markdown code fences.
pub fn extract_json_object(text: &str, key: &str) -> Option<serde_json::Map<String, Value>> {
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(obj))) = stream.next() {
            if obj.contains_key(key) {
                return Some(obj);
            }
        }
    }
    None
}
