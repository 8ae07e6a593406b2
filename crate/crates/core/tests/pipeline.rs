mod common;

use factscore::afg::FactSetRecord;
use factscore::afv::{Label, VerdictRecord};
use factscore::backends::BackendConfig;
use factscore::cli::commands::{cmd_replay, cmd_score, FACTS_FILE, REPORT_FILE, VERDICTS_FILE};
use factscore::cli::{RunConfig, ScoreArgs, EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, EXIT_UNREACHABLE};
use factscore::jsonl::{read_records, write_records};
use factscore::scoring::RunReportRecord;
use std::path::Path;
use std::process::Command;

fn args(gen: &Path) -> ScoreArgs {
    ScoreArgs {
        generations: gen.to_path_buf(),
        model_name: Some("toy".into()),
    }
}

#[test]
fn score_writes_expected_records() {
    let dir = tempfile::tempdir().unwrap();
    let toy = common::toy(dir.path());
    let out = cmd_score(&toy.config, &args(&toy.generations), None).unwrap();
    assert_eq!(out.exit_code, EXIT_OK);

    let report = &out.report;
    assert_eq!(report.model_name, "toy");
    assert_eq!(report.factscore_pct, Some(87.5));
    assert_eq!(report.respond_ratio, 0.6667);
    assert_eq!(report.avg_facts_per_response, 3.0);
    assert_eq!(report.total_failures, 0);
    assert!(report.per_topic[2].abstained);
    assert_eq!(report.per_topic[2].factscore_pct, None);

    let (facts, bad): (Vec<FactSetRecord>, _) = read_records(&out.output_dir.join(FACTS_FILE)).unwrap();
    assert!(bad.is_empty());
    assert_eq!(facts.len(), 5);
    assert!(facts[4].abstained);
    assert_eq!(facts[4].sentence_index, None);

    let (verdicts, _): (Vec<VerdictRecord>, _) = read_records(&out.output_dir.join(VERDICTS_FILE)).unwrap();
    assert_eq!(verdicts.len(), 6);
    let unsupported: Vec<_> = verdicts.iter().filter(|v| v.label == Label::NotSupported).collect();
    assert_eq!(unsupported.len(), 1);
    assert_eq!(unsupported[0].fact, "She was born in Paris.");
    assert!(verdicts.iter().all(|v| !v.passage_titles.is_empty()));

    let (reports, _): (Vec<RunReportRecord>, _) = read_records(&out.output_dir.join(REPORT_FILE)).unwrap();
    assert_eq!(&reports[0], report);
    assert!(out.output_dir.join("score.manifest.json").is_file());
}

#[test]
fn strategies_agree_on_scripted_logprobs() {
    let dir = tempfile::tempdir().unwrap();
    let toy = common::toy(dir.path());
    for strategy in ["logits", "ensemble"] {
        let cfg = RunConfig {
            strategy: strategy.into(),
            output_dir: dir.path().join(strategy),
            ..toy.config.clone()
        };
        let out = cmd_score(&cfg, &args(&toy.generations), None).unwrap();
        assert_eq!(out.report.factscore_pct, Some(87.5), "{strategy}");
    }
}

#[test]
fn missing_inputs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let toy = common::toy(dir.path());
    let cfg = RunConfig {
        kb_store_path: dir.path().join("absent.fekb"),
        ..toy.config.clone()
    };
    let err = cmd_score(&cfg, &args(&toy.generations), None).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG);
    assert!(!toy.config.output_dir.exists());
}

#[test]
fn unscripted_topic_is_partial() {
    let dir = tempfile::tempdir().unwrap();
    let toy = common::toy(dir.path());
    // Drop every scripted response for the second topic.
    let (entries, _): (Vec<serde_json::Value>, _) = read_records(&toy.script).unwrap();
    let gens = common::generations();
    let mut keep = Vec::new();
    let params = toy.config.generation_params();
    let selector = factscore::retrieval::DemoSelector::new(common::demos()).unwrap();
    let drop_digests: Vec<String> = factscore::afg::split_sentences(&gens[1].output)
        .iter()
        .map(|s| {
            factscore::backends::chat_digest(
                &factscore::afg::build_afg_prompt(s, selector.select(&s.text)),
                &params,
            )
        })
        .collect();
    for e in entries {
        if !drop_digests.iter().any(|d| e["digest"] == d.as_str()) {
            keep.push(e);
        }
    }
    write_records(&toy.script, &keep).unwrap();
    let out = cmd_score(&toy.config, &args(&toy.generations), None).unwrap();
    assert_eq!(out.exit_code, EXIT_PARTIAL);
    assert_eq!(out.report.per_topic[1].failures, 2);
    assert_eq!(out.report.factscore_pct, Some(75.0));
    assert_eq!(out.report.total_failures, 2);
}

#[test]
fn unreachable_backend_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let toy = common::toy(dir.path());
    let http = BackendConfig {
        endpoint_url: "http://127.0.0.1:9".into(),
        max_retries: 0,
        timeout_secs: 2,
        ..BackendConfig::default()
    };
    let cfg = RunConfig {
        afg_backend: http.clone(),
        afv_backend: http,
        ..toy.config.clone()
    };
    let out = cmd_score(&cfg, &args(&toy.generations), None).unwrap();
    assert_eq!(out.exit_code, EXIT_UNREACHABLE);
    assert_eq!(out.report.factscore_pct, None);
}

#[test]
fn replay_reads_a_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let toy = common::toy(dir.path());
    let cfg = RunConfig {
        afg_backend: BackendConfig::default(),
        afv_backend: BackendConfig::default(),
        ..toy.config.clone()
    };
    let out = cmd_replay(&cfg, &args(&toy.generations), &toy.script).unwrap();
    assert_eq!(out.exit_code, EXIT_OK);
    assert_eq!(out.report.factscore_pct, Some(87.5));
    assert!(out.output_dir.join("replay.manifest.json").is_file());
}

fn write_config(toy: &common::Toy) -> std::path::PathBuf {
    let path = toy.dir.join("run.toml");
    std::fs::write(&path, toml::to_string(&toy.config).unwrap()).unwrap();
    path
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_factscore"))
}

#[test]
fn binary_score_and_correlate() {
    let dir = tempfile::tempdir().unwrap();
    let toy = common::toy(dir.path());
    let config = write_config(&toy);
    let out = bin()
        .arg("--config")
        .arg(&config)
        .args(["score", "--model-name", "toy", "--generations"])
        .arg(&toy.generations)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("87.50"));

    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    std::fs::write(&a, "{\"model_name\":\"x\",\"factscore_pct\":1}\n{\"model_name\":\"y\",\"factscore_pct\":2}\n{\"model_name\":\"z\",\"factscore_pct\":3}\n").unwrap();
    std::fs::write(&b, "{\"model_name\":\"z\",\"factscore_pct\":30}\n{\"model_name\":\"x\",\"factscore_pct\":10}\n{\"model_name\":\"y\",\"factscore_pct\":25}\n").unwrap();
    let out = bin()
        .arg("--output-dir")
        .arg(dir.path().join("corr"))
        .arg("correlate")
        .arg("--column")
        .arg(format!("A={}", a.display()))
        .arg("--column")
        .arg(format!("B={}", b.display()))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("1.0000"));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("--config")
        .arg(dir.path().join("missing.toml"))
        .args(["score", "--generations", "g.jsonl"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "strategy = \"vote\"\n").unwrap();
    let out = bin()
        .arg("--config")
        .arg(&bad)
        .args(["score", "--generations", "g.jsonl"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vote"));

    let out = bin()
        .arg("--output-dir")
        .arg(dir.path())
        .args(["ingest", "--dump"])
        .arg(dir.path().join("absent.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

fn toy_annotations(dir: &Path) -> std::path::PathBuf {
    let rec = |topic: &str, sentences: serde_json::Value| {
        serde_json::json!({"input": "", "output": "", "topic": topic, "annotations": sentences}).to_string()
    };
    let lines = [
        rec(
            "Ada Lovelace",
            serde_json::json!([
                {"text": "Ada Lovelace was an English mathematician.", "is-relevant": true,
                 "human-atomic-facts": [{"text": "Ada Lovelace was English.", "label": "S"},
                                        {"text": "Ada Lovelace was a mathematician.", "label": "S"}]},
                {"text": "She was born in Paris in 1815.", "is-relevant": true,
                 "human-atomic-facts": [{"text": "She was born in Paris.", "label": "NS"},
                                        {"text": "She was born in 1815.", "label": "S"}]}
            ]),
        ),
        rec(
            "Alan Turing",
            serde_json::json!([
                {"text": "Alan Turing was a computer scientist.", "is-relevant": true,
                 "human-atomic-facts": [{"text": "Alan Turing was a computer scientist.", "label": "S"}]},
                {"text": "He worked at Bletchley Park.", "is-relevant": true,
                 "human-atomic-facts": [{"text": "He worked at Bletchley Park.", "label": "NS"}]}
            ]),
        ),
    ];
    let path = dir.join("annotations.jsonl");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

#[test]
fn eval_commands_over_a_scored_run() {
    use factscore::cli::commands::{cmd_eval_afg, cmd_eval_afv, AfvCellInput};
    use factscore::evalharness::MatchMode;

    let dir = tempfile::tempdir().unwrap();
    let toy = common::toy(dir.path());
    let out = cmd_score(&toy.config, &args(&toy.generations), None).unwrap();
    let ann = toy_annotations(dir.path());

    // Generated facts equal the human facts verbatim, so every best match is 1.
    let afg = cmd_eval_afg(&toy.config, &out.output_dir.join(FACTS_FILE), &ann, MatchMode::PerFact).unwrap();
    assert_eq!(afg.mean, Some(1.0));
    assert_eq!(afg.scored, 6);
    assert!(afg.unmatched_topics.is_empty());
    assert!(toy.config.output_dir.join("afg_eval.json").is_file());

    // Human: (3/4 + 1/2) / 2 = 62.5; estimated: (3/4 + 1) / 2 = 87.5.
    let table = cmd_eval_afv(
        &toy.config,
        &[AfvCellInput {
            evaluator: "scripted".into(),
            subject: "toy".into(),
            verdicts: out.output_dir.join(VERDICTS_FILE),
            annotations: ann,
        }],
    )
    .unwrap();
    assert_eq!(table.human, vec![62.5]);
    assert_eq!(table.rows[0].cells[0].1, -25.0);
    assert_eq!(table.rows[0].cumulative_er, 25.0);
    assert!(table.render().contains("scripted"));
}
