//! Chat-completions HTTP client with retry and optional request tracing.

use super::{
    chat_digest, embed_digest, logprob_digest, Backend, BackendConfig, BackendError, ChatMessage,
    GenerationParams, RequestKind, RequestRecord, Result, RunLog, Semaphore,
};
use rand::Rng;
use serde_json::{json, Value};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

const BODY_EXCERPT: usize = 512;

/// Appends every successful request/response pair to a line-delimited file.
/// Each line carries `digest`, `kind`, and `response`, so a trace loads
/// directly as a mock script.
#[derive(Debug)]
pub struct TraceWriter {
    out: Mutex<BufWriter<fs::File>>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let file = fs::File::create(path)?;
        Ok(Self {
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn record(&self, kind: RequestKind, digest: &str, request: &Value, response: Value) {
        let line = json!({ "digest": digest, "kind": kind, "request": request, "response": response });
        let mut out = self.out.lock().expect("trace writer poisoned");
        let res = serde_json::to_writer(&mut *out, &line)
            .map_err(std::io::Error::other)
            .and_then(|_| out.write_all(b"\n"))
            .and_then(|_| out.flush());
        if let Err(e) = res {
            log::warn!("trace write failed: {e}");
        }
    }
}

pub struct HttpBackend {
    config: BackendConfig,
    agent: ureq::Agent,
    gate: Semaphore,
    log: RunLog,
    trace: Option<Arc<TraceWriter>>,
}

enum Attempt {
    Retry(BackendError),
    Fail(BackendError),
}

fn excerpt(body: &str) -> String {
    match body.char_indices().nth(BODY_EXCERPT) {
        Some((i, _)) => format!("{}...", &body[..i]),
        None => body.to_owned(),
    }
}

fn is_retryable_status(status: u16) -> bool {
    matches!(status, 408 | 429 | 500 | 502 | 503 | 504)
}

impl HttpBackend {
    pub fn new(config: BackendConfig, trace: Option<Arc<TraceWriter>>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Semaphore::new(config.parallelism);
        Self {
            config,
            agent,
            gate,
            log: RunLog::default(),
            trace,
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint_url.trim_end_matches('/'), path)
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = self.config.retry_base_ms as f64 * 2f64.powi(retry as i32);
        let jitter = rand::thread_rng().gen_range(0.75..1.25);
        Duration::from_millis((base * jitter) as u64)
    }

    fn attempt(&self, url: &str, body: &str) -> std::result::Result<Value, Attempt> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body)
            .map_err(|e| Attempt::Retry(BackendError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(BackendError::Transport(e.to_string())))?;
        if !(200..300).contains(&status) {
            let err = BackendError::Protocol {
                status,
                body: excerpt(&text),
            };
            return Err(if is_retryable_status(status) {
                Attempt::Retry(err)
            } else {
                Attempt::Fail(err)
            });
        }
        serde_json::from_str(&text).map_err(|e| Attempt::Fail(BackendError::Decode(e.to_string())))
    }

    /// POSTs `request`, retrying transport failures and 408/429/5xx with
    /// exponential backoff. Returns the decoded JSON body.
    fn post(&self, path: &str, kind: RequestKind, digest: &str, request: &Value) -> Result<Value> {
        let _permit = self.gate.acquire();
        let url = self.url(path);
        let body = request.to_string();
        let started = Instant::now();
        let mut retries = 0u32;
        let outcome = loop {
            match self.attempt(&url, &body) {
                Ok(v) => break Ok(v),
                Err(Attempt::Fail(e)) => break Err(e),
                Err(Attempt::Retry(e)) if retries < self.config.max_retries => {
                    let wait = self.backoff(retries);
                    log::debug!("{kind} request failed ({e}); retry {} in {wait:?}", retries + 1);
                    std::thread::sleep(wait);
                    retries += 1;
                }
                Err(Attempt::Retry(e)) => break Err(e),
            }
        };
        let usage = outcome.as_ref().ok().and_then(|v| v.get("usage"));
        self.log.push(RequestRecord {
            kind,
            digest: digest.to_owned(),
            retries,
            latency_ms: started.elapsed().as_millis() as u64,
            ok: outcome.is_ok(),
            prompt_tokens: usage.and_then(|u| u["prompt_tokens"].as_u64()),
            completion_tokens: usage.and_then(|u| u["completion_tokens"].as_u64()),
        });
        outcome
    }

    fn chat_body(&self, messages: &[ChatMessage], max_tokens: u32, temperature: f64, seed: Option<u64>) -> Value {
        let mut body = json!({
            "model": self.config.model_name,
            "messages": messages,
            "temperature": temperature,
        });
        body[self.config.max_tokens_field.as_str()] = json!(max_tokens);
        if let Some(seed) = seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

fn first_choice(v: &Value) -> Result<&Value> {
    v.get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Decode("response has no choices".into()))
}

impl Backend for HttpBackend {
    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    fn parallelism(&self) -> usize {
        self.config.parallelism
    }

    fn run_log(&self) -> &RunLog {
        &self.log
    }

    fn complete(&self, messages: &[ChatMessage], params: &GenerationParams) -> Result<String> {
        let digest = chat_digest(messages, params);
        let body = self.chat_body(messages, params.max_new_tokens, params.temperature, params.seed);
        let resp = self.post(&self.config.chat_path, RequestKind::Chat, &digest, &body)?;
        let text = first_choice(&resp)?
            .pointer("/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Decode("choice has no message content".into()))?
            .to_owned();
        if let Some(t) = &self.trace {
            t.record(RequestKind::Chat, &digest, &body, Value::String(text.clone()));
        }
        Ok(text)
    }

    /// Asks for one token with top log-probabilities and reads each candidate
    /// off the first generated position. Multi-token candidates are matched
    /// against the first token's text only; a candidate missing from the top
    /// list gets the lowest listed log-probability, an upper bound on its
    /// true value.
    fn logprobs(&self, messages: &[ChatMessage], candidates: &[String]) -> Result<Vec<f64>> {
        let digest = logprob_digest(messages);
        let mut body = self.chat_body(messages, 1, 0.0, None);
        body[self.config.logprobs_field.as_str()] = json!(true);
        body[self.config.top_logprobs_field.as_str()] = json!(self.config.top_logprobs);
        let resp = self.post(&self.config.chat_path, RequestKind::Logprob, &digest, &body)?;
        let top = first_choice(&resp)?
            .pointer("/logprobs/content/0/top_logprobs")
            .and_then(Value::as_array)
            .ok_or(BackendError::Capability("log-probability scoring"))?;
        let listed: Vec<(String, f64)> = top
            .iter()
            .filter_map(|e| Some((e.get("token")?.as_str()?.trim().to_owned(), e.get("logprob")?.as_f64()?)))
            .collect();
        let floor = listed
            .iter()
            .map(|&(_, lp)| lp)
            .fold(f64::INFINITY, f64::min);
        if listed.is_empty() || !floor.is_finite() {
            return Err(BackendError::Decode("empty top_logprobs".into()));
        }
        let scores: Vec<f64> = candidates
            .iter()
            .map(|c| {
                listed
                    .iter()
                    .find(|(tok, _)| tok == c.trim())
                    .map_or(floor, |&(_, lp)| lp)
            })
            .collect();
        if let Some(t) = &self.trace {
            let map: serde_json::Map<String, Value> = candidates
                .iter()
                .zip(&scores)
                .map(|(c, s)| (c.clone(), json!(s)))
                .collect();
            t.record(RequestKind::Logprob, &digest, &body, Value::Object(map));
        }
        Ok(scores)
    }

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let body = json!({ "model": self.config.model_name, "input": texts });
        let digest = crate::backends::sha256_hex(&body);
        let resp = self.post(&self.config.embeddings_path, RequestKind::Embed, &digest, &body)?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or(BackendError::Capability("embeddings"))?;
        let mut rows: Vec<(u64, Vec<f64>)> = data
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let idx = d.get("index").and_then(Value::as_u64).unwrap_or(i as u64);
                let v: Vec<f64> = serde_json::from_value(d.get("embedding").cloned().unwrap_or(Value::Null))
                    .map_err(|e| BackendError::Decode(format!("embedding {i}: {e}")))?;
                Ok((idx, v))
            })
            .collect::<Result<_>>()?;
        rows.sort_by_key(|(i, _)| *i);
        let vectors: Vec<Vec<f64>> = rows.into_iter().map(|(_, v)| v).collect();
        if let Some(t) = &self.trace {
            for (text, v) in texts.iter().zip(&vectors) {
                t.record(RequestKind::Embed, &embed_digest(text), &json!({ "input": text }), json!(v));
            }
        }
        Ok(vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excerpt_truncates_on_char_boundary() {
        let long = "é".repeat(600);
        let e = excerpt(&long);
        assert!(e.ends_with("..."));
        assert_eq!(e.chars().count(), BODY_EXCERPT + 3);
        assert_eq!(excerpt("short"), "short");
    }

    #[test]
    fn backoff_doubles_with_jitter() {
        let b = HttpBackend::new(
            BackendConfig {
                retry_base_ms: 1000,
                ..Default::default()
            },
            None,
        );
        for retry in 0..4 {
            let d = b.backoff(retry).as_millis() as f64;
            let nominal = 1000.0 * 2f64.powi(retry as i32);
            assert!(d >= nominal * 0.75 - 1.0 && d <= nominal * 1.25, "{retry}: {d}");
        }
    }

    #[test]
    fn unreachable_server_is_transport_error() {
        let b = HttpBackend::new(
            BackendConfig {
                endpoint_url: "http://127.0.0.1:9".into(),
                max_retries: 1,
                retry_base_ms: 1,
                timeout_secs: 2,
                ..Default::default()
            },
            None,
        );
        let err = b
            .chat(&[ChatMessage::user("hi")], &GenerationParams::default())
            .unwrap_err();
        assert!(err.is_unreachable(), "{err}");
        assert_eq!(b.run_log().records()[0].retries, 1);
    }
}
