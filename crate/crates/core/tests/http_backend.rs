use factscore::backends::http::{HttpBackend, TraceWriter};
use factscore::backends::mock::MockBackend;
use factscore::backends::{Backend, BackendConfig, BackendError, ChatMessage, GenerationParams};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

struct Reply {
    status: u16,
    body: String,
}

fn reply(status: u16, body: serde_json::Value) -> Reply {
    Reply {
        status,
        body: body.to_string(),
    }
}

fn chat_ok(text: &str) -> Reply {
    reply(
        200,
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 3}
        }),
    )
}

/// Serves `replies` in order, one per connection, and records each request
/// as (headers, body).
type Seen = Arc<Mutex<Vec<(String, String)>>>;

fn serve(replies: Vec<Reply>) -> (String, Seen, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    let handle = std::thread::spawn(move || {
        for r in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                head.push_str(&line);
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push((head, String::from_utf8(body).unwrap()));
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                r.status,
                r.body.len(),
                r.body
            )
            .unwrap();
        }
    });
    (url, seen, handle)
}

fn config(url: &str) -> BackendConfig {
    BackendConfig {
        endpoint_url: url.into(),
        model_name: "m".into(),
        max_retries: 3,
        retry_base_ms: 1,
        timeout_secs: 5,
        ..BackendConfig::default()
    }
}

fn messages() -> Vec<ChatMessage> {
    vec![ChatMessage::system("sys"), ChatMessage::user("hello")]
}

#[test]
fn retries_rate_limits_then_succeeds() {
    let (url, seen, server) = serve(vec![
        reply(429, serde_json::json!({"error": "slow down"})),
        reply(503, serde_json::json!({})),
        chat_ok("- A fact."),
    ]);
    let mut cfg = config(&url);
    cfg.api_key = Some("k123".into());
    let backend = HttpBackend::new(cfg, None);
    let params = GenerationParams {
        seed: Some(5),
        ..GenerationParams::default()
    };
    assert_eq!(backend.chat(&messages(), &params).unwrap(), "- A fact.");
    server.join().unwrap();

    let records = backend.run_log().records();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].retries, 2);
    assert!(records[0].ok);
    assert_eq!(records[0].prompt_tokens, Some(12));
    assert_eq!(records[0].completion_tokens, Some(3));

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    let (head, body) = &seen[2];
    assert!(head.starts_with("POST /v1/chat/completions"));
    assert!(head.to_ascii_lowercase().contains("authorization: bearer k123"));
    let body: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(body["max_tokens"], 128);
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["seed"], 5);
    assert_eq!(body["model"], "m");
    assert_eq!(body["messages"][0]["role"], "system");
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen, server) = serve(vec![reply(400, serde_json::json!({"error": "bad request"}))]);
    let backend = HttpBackend::new(config(&url), None);
    let err = backend.chat(&messages(), &GenerationParams::default()).unwrap_err();
    server.join().unwrap();
    match err {
        BackendError::Protocol { status, body } => {
            assert_eq!(status, 400);
            assert!(body.contains("bad request"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(!err_is_unreachable(400));
    assert_eq!(seen.lock().unwrap().len(), 1);
    assert_eq!(backend.run_log().records()[0].retries, 0);
}

fn err_is_unreachable(status: u16) -> bool {
    BackendError::Protocol {
        status,
        body: String::new(),
    }
    .is_unreachable()
}

#[test]
fn gives_up_after_max_retries() {
    let (url, seen, server) = serve((0..3).map(|_| reply(500, serde_json::json!({}))).collect());
    let mut cfg = config(&url);
    cfg.max_retries = 2;
    let backend = HttpBackend::new(cfg, None);
    let err = backend.chat(&messages(), &GenerationParams::default()).unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, BackendError::Protocol { status: 500, .. }));
    assert_eq!(seen.lock().unwrap().len(), 3);
    let rec = &backend.run_log().records()[0];
    assert_eq!(rec.retries, 2);
    assert!(!rec.ok);
}

#[test]
fn reads_candidate_logprobs() {
    let body = serde_json::json!({
        "choices": [{
            "message": {"content": "True"},
            "logprobs": {"content": [{
                "token": "True",
                "top_logprobs": [
                    {"token": "True", "logprob": -0.2},
                    {"token": " False", "logprob": -1.9},
                    {"token": "Yes", "logprob": -4.0}
                ]
            }]}
        }]
    });
    let (url, seen, server) = serve(vec![reply(200, body.clone()), reply(200, body)]);
    let backend = HttpBackend::new(config(&url), None);
    let scores = backend
        .score_candidates(&messages(), &["True".into(), "False".into()])
        .unwrap();
    assert_eq!(scores, vec![-0.2, -1.9]);
    let scores = backend.score_candidates(&messages(), &["Maybe".into()]).unwrap();
    assert_eq!(scores, vec![-4.0]);
    server.join().unwrap();
    let req: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0].1).unwrap();
    assert_eq!(req["logprobs"], true);
    assert_eq!(req["top_logprobs"], 20);
    assert_eq!(req["max_tokens"], 1);
}

#[test]
fn missing_logprobs_is_a_capability_error() {
    let (url, _, server) = serve(vec![chat_ok("True")]);
    let backend = HttpBackend::new(config(&url), None);
    let err = backend
        .score_candidates(&messages(), &["True".into(), "False".into()])
        .unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, BackendError::Capability(_)));
}

#[test]
fn embeddings_are_normalized_and_ordered() {
    let body = serde_json::json!({
        "data": [
            {"index": 1, "embedding": [0.0, 2.0]},
            {"index": 0, "embedding": [3.0, 4.0]}
        ]
    });
    let (url, _, server) = serve(vec![reply(200, body)]);
    let backend = HttpBackend::new(config(&url), None);
    let v = backend.embed(&["a".into(), "b".into()]).unwrap();
    server.join().unwrap();
    assert_eq!(v, vec![vec![0.6, 0.8], vec![0.0, 1.0]]);
}

#[test]
fn trace_replays_through_the_mock() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("trace.jsonl");
    let logprob_body = serde_json::json!({
        "choices": [{"logprobs": {"content": [{"top_logprobs": [
            {"token": "False", "logprob": -0.1},
            {"token": "True", "logprob": -3.0}
        ]}]}}]
    });
    let (url, _, server) = serve(vec![
        chat_ok("True"),
        reply(200, logprob_body),
        reply(200, serde_json::json!({"data": [{"embedding": [1.0, 0.0]}]})),
    ]);
    let trace = Arc::new(TraceWriter::create(&trace_path).unwrap());
    let live = HttpBackend::new(config(&url), Some(trace));
    let params = GenerationParams::default();
    let cands = vec!["True".to_string(), "False".to_string()];
    let chat = live.chat(&messages(), &params).unwrap();
    let scores = live.score_candidates(&messages(), &cands).unwrap();
    let emb = live.embed(&["x".into()]).unwrap();
    server.join().unwrap();
    drop(live);

    let replay = MockBackend::from_script_file(&trace_path).unwrap();
    assert_eq!(replay.chat(&messages(), &params).unwrap(), chat);
    assert_eq!(replay.score_candidates(&messages(), &cands).unwrap(), scores);
    assert_eq!(replay.embed(&["x".into()]).unwrap(), emb);
}
