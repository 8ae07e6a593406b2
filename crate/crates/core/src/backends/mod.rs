//! Language-model backends: chat completion, candidate log-probabilities, and
//! text embeddings behind one trait.
//!
//! [`mock::MockBackend`] replays scripted responses keyed by a request digest
//! and is what the test suites run against. [`http::HttpBackend`] speaks the
//! chat-completions wire shape used by most local and hosted servers.

pub mod http;
pub mod mock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: status {status}: {body}")]
    Protocol { status: u16, body: String },
    #[error("backend does not support {0}")]
    Capability(&'static str),
    #[error("no scripted {kind} response for digest {digest}")]
    Unscripted { kind: RequestKind, digest: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("could not decode response: {0}")]
    Decode(String),
}

impl BackendError {
    /// Whether the failure means the server could not be reached at all.
    pub fn is_unreachable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

pub type Result<T> = std::result::Result<T, BackendError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
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
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_new_tokens: u32,
    pub temperature: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_new_tokens: 128,
            temperature: 0.0,
            seed: None,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_new_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_new_tokens must be >= 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Chat,
    Logprob,
    Embed,
}

impl std::fmt::Display for RequestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RequestKind::Chat => "chat",
            RequestKind::Logprob => "logprob",
            RequestKind::Embed => "embed",
        })
    }
}

pub(crate) fn sha256_hex(value: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(value).expect("json values always serialize");
    hex::encode(Sha256::digest(&bytes))
}

/// Stable digest of a chat request: role/content pairs plus generation params.
pub fn chat_digest(messages: &[ChatMessage], params: &GenerationParams) -> String {
    sha256_hex(&serde_json::json!({
        "kind": "chat",
        "messages": messages,
        "params": params,
    }))
}

/// Digest of a log-probability request. Candidates are not part of the key;
/// the scripted response maps candidate text to its score.
pub fn logprob_digest(messages: &[ChatMessage]) -> String {
    sha256_hex(&serde_json::json!({ "kind": "logprob", "messages": messages }))
}

/// Digest of a single text submitted for embedding.
pub fn embed_digest(text: &str) -> String {
    sha256_hex(&serde_json::json!({ "kind": "embed", "text": text }))
}

/// Metadata for one backend request, appended to the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub kind: RequestKind,
    pub digest: String,
    pub retries: u32,
    pub latency_ms: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Default)]
pub struct RunLog {
    records: Mutex<Vec<RequestRecord>>,
}

impl RunLog {
    pub fn push(&self, record: RequestRecord) {
        self.records.lock().expect("run log poisoned").push(record);
    }

    pub fn records(&self) -> Vec<RequestRecord> {
        self.records.lock().expect("run log poisoned").clone()
    }

    pub fn total_retries(&self) -> u64 {
        self.records().iter().map(|r| u64::from(r.retries)).sum()
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("run log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct Semaphore {
    available: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().expect("semaphore poisoned");
        while *n == 0 {
            n = self.cv.wait(n).expect("semaphore poisoned");
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

fn validate_messages(messages: &[ChatMessage]) -> Result<()> {
    if !messages.iter().any(|m| m.role == Role::User) {
        return Err(BackendError::InvalidRequest("at least one user message is required".into()));
    }
    if let Some(m) = messages
        .iter()
        .find(|m| m.role != Role::Assistant && m.content.is_empty())
    {
        return Err(BackendError::InvalidRequest(format!("empty {:?} message", m.role)));
    }
    Ok(())
}

/// A language-model backend.
///
/// Implementors provide the raw `complete`, `logprobs`, and `embed_raw`
/// calls; callers use the validating `chat`, `score_candidates`, and `embed`
/// wrappers.
pub trait Backend: Send + Sync {
    fn model_name(&self) -> &str;

    /// Upper bound on concurrent in-flight requests.
    fn parallelism(&self) -> usize {
        1
    }

    fn run_log(&self) -> &RunLog;

    fn complete(&self, messages: &[ChatMessage], params: &GenerationParams) -> Result<String>;

    fn logprobs(&self, messages: &[ChatMessage], candidates: &[String]) -> Result<Vec<f64>>;

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;

    /// Assistant text for the conversation, sent verbatim and in order.
    fn chat(&self, messages: &[ChatMessage], params: &GenerationParams) -> Result<String> {
        validate_messages(messages)?;
        params.validate()?;
        self.complete(messages, params)
    }

    /// `log P(candidate | prompt)` for each candidate, in candidate order.
    fn score_candidates(&self, messages: &[ChatMessage], candidates: &[String]) -> Result<Vec<f64>> {
        validate_messages(messages)?;
        if candidates.is_empty() {
            return Err(BackendError::InvalidRequest("no candidates".into()));
        }
        if candidates.iter().any(String::is_empty) {
            return Err(BackendError::InvalidRequest("empty candidate".into()));
        }
        let scores = self.logprobs(messages, candidates)?;
        if scores.len() != candidates.len() {
            return Err(BackendError::Decode(format!(
                "expected {} scores, got {}",
                candidates.len(),
                scores.len()
            )));
        }
        Ok(scores)
    }

    /// One L2-normalized vector per text, all of the same dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Err(BackendError::InvalidRequest("no texts to embed".into()));
        }
        let mut vectors = self.embed_raw(texts)?;
        if vectors.len() != texts.len() {
            return Err(BackendError::Decode(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(BackendError::Decode("embeddings have inconsistent dimensions".into()));
        }
        for v in &mut vectors {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
        }
        Ok(vectors)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Http,
    Mock,
}

/// Connection settings for one backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    pub retry_base_ms: u64,
    pub parallelism: usize,
    pub chat_path: String,
    pub embeddings_path: String,
    pub max_tokens_field: String,
    pub logprobs_field: String,
    pub top_logprobs_field: String,
    pub top_logprobs: u32,
    /// Mock script (or trace file) for `kind = "mock"`.
    pub script: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint_url: "http://127.0.0.1:8000".into(),
            model_name: String::new(),
            api_key_env: None,
            api_key: None,
            timeout_secs: 120,
            max_retries: 3,
            retry_base_ms: 1000,
            parallelism: 1,
            chat_path: "/v1/chat/completions".into(),
            embeddings_path: "/v1/embeddings".into(),
            max_tokens_field: "max_tokens".into(),
            logprobs_field: "logprobs".into(),
            top_logprobs_field: "top_logprobs".into(),
            top_logprobs: 20,
            script: None,
        }
    }
}

impl BackendConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

/// Builds the backend described by `config`, mirroring HTTP traffic to
/// `trace` when given.
pub fn connect(config: &BackendConfig, trace: Option<Arc<http::TraceWriter>>) -> std::result::Result<Arc<dyn Backend>, String> {
    if config.parallelism == 0 {
        return Err("parallelism must be >= 1".into());
    }
    match config.kind {
        BackendKind::Mock => {
            let path = config
                .script
                .as_ref()
                .ok_or("mock backend needs a `script` path")?;
            let mock = mock::MockBackend::from_script_file(path)
                .map_err(|e| format!("{}: {e}", path.display()))?
                .with_model_name(config.model_name.clone())
                .with_parallelism(config.parallelism);
            Ok(Arc::new(mock))
        }
        BackendKind::Http => {
            let mut config = config.clone();
            if config.api_key.is_none() {
                if let Some(var) = &config.api_key_env {
                    config.api_key = std::env::var(var).ok();
                }
            }
            Ok(Arc::new(http::HttpBackend::new(config, trace)))
        }
    }
}
