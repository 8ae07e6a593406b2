//! Deterministic scripted backend.
//!
//! A script is a line-delimited file of `{digest, kind, response}` records.
//! `chat` responses are strings, `logprob` responses map candidate text to a
//! log-probability, and `embed` responses are vectors. Trace files written
//! by the HTTP backend carry the same three fields and load as scripts.

use super::{
    chat_digest, embed_digest, logprob_digest, Backend, BackendError, ChatMessage,
    GenerationParams, RequestKind, RequestRecord, Result, RunLog, Semaphore,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub digest: String,
    pub kind: RequestKind,
    pub response: serde_json::Value,
}

#[derive(Debug, Default)]
pub struct MockBackend {
    model_name: String,
    chat: HashMap<String, String>,
    logprobs: HashMap<String, BTreeMap<String, f64>>,
    embeddings: HashMap<String, Vec<f64>>,
    parallelism: usize,
    delay: Option<Duration>,
    gate: Option<Semaphore>,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    log: RunLog,
}

impl MockBackend {
    pub fn new() -> Self {
        Self {
            model_name: "mock".into(),
            parallelism: 1,
            ..Default::default()
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = ScriptEntry>) -> std::result::Result<Self, String> {
        let mut mock = Self::new();
        for e in entries {
            match e.kind {
                RequestKind::Chat => {
                    let text = e
                        .response
                        .as_str()
                        .ok_or_else(|| format!("chat response for {} is not a string", e.digest))?;
                    mock.chat.insert(e.digest, text.to_owned());
                }
                RequestKind::Logprob => {
                    let map: BTreeMap<String, f64> = serde_json::from_value(e.response)
                        .map_err(|err| format!("logprob response for {}: {err}", e.digest))?;
                    mock.logprobs.insert(e.digest, map);
                }
                RequestKind::Embed => {
                    let v: Vec<f64> = serde_json::from_value(e.response)
                        .map_err(|err| format!("embed response for {}: {err}", e.digest))?;
                    mock.embeddings.insert(e.digest, v);
                }
            }
        }
        Ok(mock)
    }

    pub fn from_script_file(path: &Path) -> std::result::Result<Self, String> {
        let (entries, errors) =
            crate::jsonl::read_records::<ScriptEntry>(path).map_err(|e| e.to_string())?;
        if let Some(e) = errors.first() {
            return Err(format!("line {}: {}", e.line, e.message));
        }
        Self::from_entries(entries)
    }

    pub fn with_model_name(mut self, name: impl Into<String>) -> Self {
        let name = name.into();
        if !name.is_empty() {
            self.model_name = name;
        }
        self
    }

    pub fn with_parallelism(mut self, n: usize) -> Self {
        self.parallelism = n.max(1);
        self.gate = Some(Semaphore::new(self.parallelism));
        self
    }

    /// Sleeps for `delay` inside every request; used to exercise concurrency.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn script_chat(&mut self, messages: &[ChatMessage], params: &GenerationParams, response: impl Into<String>) -> &mut Self {
        self.chat.insert(chat_digest(messages, params), response.into());
        self
    }

    pub fn script_logprobs<I, S>(&mut self, messages: &[ChatMessage], scores: I) -> &mut Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let map = scores.into_iter().map(|(k, v)| (k.into(), v)).collect();
        self.logprobs.insert(logprob_digest(messages), map);
        self
    }

    pub fn script_embedding(&mut self, text: &str, vector: Vec<f64>) -> &mut Self {
        self.embeddings.insert(embed_digest(text), vector);
        self
    }

    /// Highest number of requests observed in flight at once.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    /// All scripted entries in a stable order, suitable for writing a script file.
    pub fn entries(&self) -> Vec<ScriptEntry> {
        let mut out: Vec<ScriptEntry> = Vec::new();
        for (d, r) in &self.chat {
            out.push(ScriptEntry {
                digest: d.clone(),
                kind: RequestKind::Chat,
                response: serde_json::Value::String(r.clone()),
            });
        }
        for (d, m) in &self.logprobs {
            out.push(ScriptEntry {
                digest: d.clone(),
                kind: RequestKind::Logprob,
                response: serde_json::to_value(m).expect("map serializes"),
            });
        }
        for (d, v) in &self.embeddings {
            out.push(ScriptEntry {
                digest: d.clone(),
                kind: RequestKind::Embed,
                response: serde_json::to_value(v).expect("vector serializes"),
            });
        }
        out.sort_by(|a, b| (a.kind as u8, &a.digest).cmp(&(b.kind as u8, &b.digest)));
        out
    }

    fn request<T>(&self, kind: RequestKind, digest: String, f: impl FnOnce(&str) -> Result<T>) -> Result<T> {
        let _permit = self.gate.as_ref().map(Semaphore::acquire);
        let n = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(n, Ordering::SeqCst);
        if let Some(d) = self.delay {
            std::thread::sleep(d);
        }
        let out = f(&digest);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        self.log.push(RequestRecord {
            kind,
            digest,
            retries: 0,
            latency_ms: 0,
            ok: out.is_ok(),
            prompt_tokens: None,
            completion_tokens: None,
        });
        out
    }
}

impl Backend for MockBackend {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn parallelism(&self) -> usize {
        self.parallelism
    }

    fn run_log(&self) -> &RunLog {
        &self.log
    }

    fn complete(&self, messages: &[ChatMessage], params: &GenerationParams) -> Result<String> {
        self.request(RequestKind::Chat, chat_digest(messages, params), |d| {
            self.chat.get(d).cloned().ok_or_else(|| BackendError::Unscripted {
                kind: RequestKind::Chat,
                digest: d.to_owned(),
            })
        })
    }

    fn logprobs(&self, messages: &[ChatMessage], candidates: &[String]) -> Result<Vec<f64>> {
        if self.logprobs.is_empty() {
            return Err(BackendError::Capability("log-probability scoring"));
        }
        self.request(RequestKind::Logprob, logprob_digest(messages), |d| {
            let map = self.logprobs.get(d).ok_or_else(|| BackendError::Unscripted {
                kind: RequestKind::Logprob,
                digest: d.to_owned(),
            })?;
            candidates
                .iter()
                .map(|c| {
                    map.get(c)
                        .copied()
                        .ok_or_else(|| BackendError::Decode(format!("no score scripted for candidate {c:?}")))
                })
                .collect()
        })
    }

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if self.embeddings.is_empty() {
            return Err(BackendError::Capability("embeddings"));
        }
        texts
            .iter()
            .map(|t| {
                self.request(RequestKind::Embed, embed_digest(t), |d| {
                    self.embeddings.get(d).cloned().ok_or_else(|| BackendError::Unscripted {
                        kind: RequestKind::Embed,
                        digest: d.to_owned(),
                    })
                })
            })
            .collect()
    }
}
