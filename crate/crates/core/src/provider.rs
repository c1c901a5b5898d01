//! Chat-completion and embedding provider interfaces.
//!
//! Two transports ship: an OpenAI-compatible HTTP client and file-backed
//! scripted mocks for offline, bit-deterministic runs.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("no scripted response for request {0}")]
    NoScriptedResponse(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    /// Pinned to 0 by every built-in prompt.
    pub temperature: Option<f64>,
}

impl ChatRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        ChatRequest {
            messages: vec![ChatMessage::system(system), ChatMessage::user(user)],
            temperature: Some(0.0),
        }
    }

    pub fn system_text(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    pub fn user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    /// Hex SHA-256 over the role-tagged messages; the scripted mock key.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for m in &self.messages {
            h.update(format!("{:?}", m.role).as_bytes());
            h.update([0u8]);
            h.update(m.content.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;

    /// Identifies endpoint and model for run manifests.
    fn fingerprint(&self) -> String;

    /// Upper bound on estimated prompt tokens, if the provider has one.
    fn max_prompt_tokens(&self) -> Option<usize> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Provider,
    LocalFallback,
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError>;

    fn fingerprint(&self) -> String;

    fn source(&self) -> EmbeddingSource {
        EmbeddingSource::Provider
    }
}

/// Endpoint settings. Secrets are read from `api_key_env` at call time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_prompt_tokens: Option<usize>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: String::new(),
            api_key_env: "CHAT_API_KEY".into(),
            timeout_secs: 120,
            max_prompt_tokens: None,
        }
    }
}

impl HttpConfig {
    fn client(&self) -> Result<reqwest::blocking::Client, ProviderError> {
        reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(self.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value, ProviderError> {
        let url = format!("{}/{}", self.base_url.trim_end_matches('/'), path);
        let mut req = self.client()?.post(url).json(body);
        if let Ok(key) = std::env::var(&self.api_key_env) {
            if !key.is_empty() {
                req = req.bearer_auth(key);
            }
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions`.
#[derive(Debug, Clone)]
pub struct HttpChatProvider {
    pub config: HttpConfig,
}

impl HttpChatProvider {
    pub fn new(config: HttpConfig) -> Self {
        HttpChatProvider { config }
    }
}

impl ChatProvider for HttpChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let mut body = serde_json::json!({
            "model": self.config.model,
            "messages": request.messages,
        });
        if let Some(t) = request.temperature {
            body["temperature"] = serde_json::json!(t);
        }
        let v = self.config.post("chat/completions", &body)?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Malformed("missing choices[0].message.content".into()))
    }

    fn fingerprint(&self) -> String {
        format!("http:{}#{}", self.config.base_url, self.config.model)
    }

    fn max_prompt_tokens(&self) -> Option<usize> {
        self.config.max_prompt_tokens
    }
}

/// OpenAI-compatible `POST {base_url}/embeddings`.
#[derive(Debug, Clone)]
pub struct HttpEmbeddingProvider {
    pub config: HttpConfig,
}

impl HttpEmbeddingProvider {
    pub fn new(config: HttpConfig) -> Self {
        HttpEmbeddingProvider { config }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let body = serde_json::json!({ "model": self.config.model, "input": text });
        let v = self.config.post("embeddings", &body)?;
        let arr = v["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| ProviderError::Malformed("missing data[0].embedding".into()))?;
        arr.iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| ProviderError::Malformed("non-numeric embedding entry".into()))
            })
            .collect()
    }

    fn fingerprint(&self) -> String {
        format!("http:{}#{}", self.config.base_url, self.config.model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedReply {
    Text(String),
    Fail { error: ScriptedFailure },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedFailure {
    Timeout,
    Transport,
}

impl ScriptedReply {
    fn into_result(self) -> Result<String, ProviderError> {
        match self {
            ScriptedReply::Text(t) => Ok(t),
            ScriptedReply::Fail {
                error: ScriptedFailure::Timeout,
            } => Err(ProviderError::Timeout),
            ScriptedReply::Fail {
                error: ScriptedFailure::Transport,
            } => Err(ProviderError::Transport("scripted transport failure".into())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContainsRule {
    pub contains: String,
    pub response: String,
}

/// On-disk script for [`ScriptedChatProvider`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatScript {
    /// Request hash → reply.
    pub responses: HashMap<String, ScriptedReply>,
    /// Replies consumed in order by requests whose hash is not scripted.
    pub sequence: Vec<ScriptedReply>,
    /// First rule whose needle occurs in the user message wins.
    pub rules: Vec<ContainsRule>,
    pub default: Option<String>,
}

/// Offline chat provider. Lookup order: request hash, sequence, rules,
/// default.
#[derive(Debug, Default)]
pub struct ScriptedChatProvider {
    responses: HashMap<String, ScriptedReply>,
    sequence: Mutex<VecDeque<ScriptedReply>>,
    rules: Vec<ContainsRule>,
    default: Option<String>,
    log: Mutex<Vec<ChatRequest>>,
    max_prompt_tokens: Option<usize>,
}

impl ScriptedChatProvider {
    pub fn new(script: ChatScript) -> Self {
        ScriptedChatProvider {
            responses: script.responses,
            sequence: Mutex::new(script.sequence.into()),
            rules: script.rules,
            default: script.default,
            log: Mutex::new(Vec::new()),
            max_prompt_tokens: None,
        }
    }

    pub fn from_sequence<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<ScriptedReply>,
    {
        Self::new(ChatScript {
            sequence: replies.into_iter().map(Into::into).collect(),
            ..Default::default()
        })
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        let script: ChatScript = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    pub fn with_max_prompt_tokens(mut self, limit: usize) -> Self {
        self.max_prompt_tokens = Some(limit);
        self
    }

    /// Every request seen so far, in call order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("log lock").clone()
    }
}

impl From<&str> for ScriptedReply {
    fn from(s: &str) -> Self {
        ScriptedReply::Text(s.to_string())
    }
}

impl From<String> for ScriptedReply {
    fn from(s: String) -> Self {
        ScriptedReply::Text(s)
    }
}

impl ChatProvider for ScriptedChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        self.log.lock().expect("log lock").push(request.clone());
        let hash = request.hash();
        if let Some(r) = self.responses.get(&hash) {
            return r.clone().into_result();
        }
        if let Some(r) = self.sequence.lock().expect("sequence lock").pop_front() {
            return r.into_result();
        }
        let user = request.user_text();
        if let Some(rule) = self.rules.iter().find(|r| user.contains(&r.contains)) {
            return Ok(rule.response.clone());
        }
        self.default
            .clone()
            .ok_or(ProviderError::NoScriptedResponse(hash))
    }

    fn fingerprint(&self) -> String {
        "scripted".into()
    }

    fn max_prompt_tokens(&self) -> Option<usize> {
        self.max_prompt_tokens
    }
}

/// Text → vector table, keyed by the exact text or its SHA-256 hex.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingScript {
    pub vectors: HashMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedEmbeddingProvider {
    script: EmbeddingScript,
}

impl ScriptedEmbeddingProvider {
    pub fn new(script: EmbeddingScript) -> Self {
        ScriptedEmbeddingProvider { script }
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        Self::new(EmbeddingScript {
            vectors: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map(Self::new)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl EmbeddingProvider for ScriptedEmbeddingProvider {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        self.script
            .vectors
            .get(text)
            .or_else(|| self.script.vectors.get(&text_hash(text)))
            .cloned()
            .ok_or_else(|| ProviderError::NoScriptedResponse(text_hash(text)))
    }

    fn fingerprint(&self) -> String {
        "scripted".into()
    }
}
