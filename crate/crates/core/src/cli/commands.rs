use super::config::RunConfig;
use super::manifest::write_manifest;
use super::{Cli, CliError, Command, ScoreArgs, EXIT_OK, EXIT_PARTIAL, EXIT_UNREACHABLE};
use crate::afg::{generate_facts, AbstentionDetector, AfgOptions, FactSet, FactSetRecord, SubjectGeneration};
use crate::afv::{validate_all, AfvOptions, Label, ValidationStrategy, VerdictRecord};
use crate::backends::http::TraceWriter;
use crate::backends::{connect, Backend, BackendConfig, BackendKind};
use crate::corpus::{ingest_dump, IngestStats, KbStore};
use crate::evalharness::report::{correlate_columns, render_correlations, CorrelationRow, ErCell, ErTable};
use crate::evalharness::similarity::{best_match_scores, EmbeddingF1, MatchMode, Similarity, TokenF1};
use crate::evalharness::{human_factscore, load_annotations, ScoreVector};
use crate::jsonl::{read_records, write_atomic, write_records};
use crate::retrieval::{Bm25Params, DemoSelector, DenseRetriever, KbIndex, PassageRetriever};
use crate::scoring::{aggregate, RunReportRecord, TopicReport};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const FACTS_FILE: &str = "facts.jsonl";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const REPORT_FILE: &str = "report.jsonl";
pub const RUN_LOG_FILE: &str = "run_log.jsonl";

pub(crate) fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    let cfg = cli.resolve_config()?;
    match &cli.command {
        Command::Ingest {
            dump,
            store,
            chunk_size,
        } => {
            let mut cfg = cfg;
            if let Some(s) = store {
                cfg.kb_store_path.clone_from(s);
            }
            if let Some(n) = chunk_size {
                cfg.chunk_size = *n;
            }
            let stats = cmd_ingest(&cfg, dump)?;
            println!(
                "documents: {}\npassages: {}\nskipped: {}\nduplicates: {}",
                stats.documents, stats.passages, stats.skipped, stats.duplicates
            );
            Ok(EXIT_OK)
        }
        Command::Score(args) => {
            let out = cmd_score(&cfg, args, cli.trace.as_deref())?;
            print!("{}", out.table);
            Ok(out.exit_code)
        }
        Command::Replay(args) => {
            let trace = cli
                .trace
                .as_deref()
                .ok_or_else(|| CliError::Config("replay needs --trace".into()))?;
            let out = cmd_replay(&cfg, args, trace)?;
            print!("{}", out.table);
            Ok(out.exit_code)
        }
        Command::EvalAfg {
            facts,
            annotations,
            per_sentence,
        } => {
            let mode = if *per_sentence {
                MatchMode::PerSentence
            } else {
                MatchMode::PerFact
            };
            let rep = cmd_eval_afg(&cfg, facts, annotations, mode)?;
            println!("{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
            Ok(EXIT_OK)
        }
        Command::EvalAfv {
            verdicts,
            annotations,
            evaluator,
            subject,
        } => {
            if verdicts.len() != annotations.len() {
                return Err(CliError::Config("--verdicts and --annotations must pair up".into()));
            }
            let cells: Vec<AfvCellInput> = verdicts
                .iter()
                .zip(annotations)
                .enumerate()
                .map(|(i, (v, a))| AfvCellInput {
                    evaluator: evaluator.get(i).cloned().unwrap_or_else(|| file_stem(v)),
                    subject: subject.get(i).cloned().unwrap_or_else(|| file_stem(a)),
                    verdicts: v.clone(),
                    annotations: a.clone(),
                })
                .collect();
            let table = cmd_eval_afv(&cfg, &cells)?;
            print!("{}", table.render());
            Ok(EXIT_OK)
        }
        Command::Correlate { columns } => {
            let cols = columns
                .iter()
                .map(|c| {
                    c.split_once('=')
                        .map(|(n, p)| (n.to_owned(), PathBuf::from(p)))
                        .ok_or_else(|| CliError::Config(format!("--column expects NAME=PATH, got {c:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let rows = cmd_correlate(&cfg, &cols)?;
            print!("{}", render_correlations(&rows));
            Ok(EXIT_OK)
        }
    }
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} not found: {}", path.display())))
    }
}

pub fn cmd_ingest(cfg: &RunConfig, dump: &Path) -> Result<IngestStats, CliError> {
    require_file(dump, "knowledge-base dump")?;
    let stats = ingest_dump(dump, &cfg.kb_store_path, cfg.chunk_size).map_err(|e| match e {
        crate::corpus::CorpusError::ChunkSize(_) => CliError::Config(e.to_string()),
        other => CliError::Failed(other.to_string()),
    })?;
    if let Some(dir) = cfg.kb_store_path.parent() {
        write_manifest(dir, "ingest", cfg.seed, cfg, &[dump])?;
    }
    Ok(stats)
}

/// Result of a scoring run.
#[derive(Debug, Clone)]
pub struct ScoreOutcome {
    pub report: RunReportRecord,
    pub exit_code: i32,
    pub table: String,
    pub output_dir: PathBuf,
}

fn connect_cfg(cfg: &BackendConfig, trace: &Option<Arc<TraceWriter>>, what: &str) -> Result<Arc<dyn Backend>, CliError> {
    connect(cfg, trace.clone()).map_err(|e| CliError::Config(format!("{what}: {e}")))
}

pub fn cmd_replay(cfg: &RunConfig, args: &ScoreArgs, trace: &Path) -> Result<ScoreOutcome, CliError> {
    require_file(trace, "trace file")?;
    let mut cfg = cfg.clone();
    let mocked = |b: &mut BackendConfig| {
        b.kind = BackendKind::Mock;
        b.script = Some(trace.to_path_buf());
    };
    mocked(&mut cfg.afg_backend);
    mocked(&mut cfg.afv_backend);
    if let Some(b) = cfg.embedding_backend.as_mut() {
        mocked(b);
    }
    run_score(&cfg, args, None, "replay")
}

pub fn cmd_score(cfg: &RunConfig, args: &ScoreArgs, trace: Option<&Path>) -> Result<ScoreOutcome, CliError> {
    run_score(cfg, args, trace, "score")
}

fn run_score(cfg: &RunConfig, args: &ScoreArgs, trace: Option<&Path>, command: &str) -> Result<ScoreOutcome, CliError> {
    require_file(&cfg.kb_store_path, "knowledge-base store")?;
    require_file(&cfg.demo_pool_path, "demo pool")?;
    require_file(&args.generations, "generations file")?;
    let strategy = ValidationStrategy::from_name(&cfg.strategy)
        .ok_or_else(|| CliError::Config(format!("unknown strategy {:?}", cfg.strategy)))?;

    let store = KbStore::open(&cfg.kb_store_path).map_err(|e| CliError::Config(e.to_string()))?;
    let kb = match &cfg.index_cache_path {
        Some(cache) => KbIndex::from_store_cached(&store, Bm25Params::default(), cache),
        None => KbIndex::from_store(&store, Bm25Params::default()),
    }
    .map_err(|e| CliError::Config(e.to_string()))?;
    let (demos, bad) = read_records(&cfg.demo_pool_path)?;
    if !bad.is_empty() {
        return Err(CliError::Config(format!(
            "demo pool line {}: {}",
            bad[0].line, bad[0].message
        )));
    }
    let demos = DemoSelector::new(demos).map_err(|e| CliError::Config(e.to_string()))?;
    let (generations, bad): (Vec<SubjectGeneration>, _) = read_records(&args.generations)?;
    for b in &bad {
        log::warn!("{}:{}: skipped generation: {}", args.generations.display(), b.line, b.message);
    }
    if let Some(g) = generations.iter().find(|g| g.topic.is_empty()) {
        return Err(CliError::Config(format!("generation with empty topic: {:?}", g.output)));
    }

    let trace_writer = match trace {
        Some(p) => Some(Arc::new(TraceWriter::create(p)?)),
        None => None,
    };
    let afg_backend = connect_cfg(&cfg.afg_backend, &trace_writer, "afg_backend")?;
    let afv_backend = connect_cfg(&cfg.afv_backend, &trace_writer, "afv_backend")?;
    let dense = match (&cfg.retrieval[..], &cfg.embedding_backend) {
        ("bm25", _) => None,
        ("embedding", Some(b)) => {
            let backend = connect_cfg(b, &trace_writer, "embedding_backend")?;
            Some(
                DenseRetriever::build(kb.passages().to_vec(), backend)
                    .map_err(|e| CliError::Failed(format!("embedding the knowledge base: {e}")))?,
            )
        }
        ("embedding", None) => {
            return Err(CliError::Config("retrieval = \"embedding\" needs an embedding_backend".into()))
        }
        (other, _) => return Err(CliError::Config(format!("unknown retrieval mode {other:?}"))),
    };
    let retriever: &dyn PassageRetriever = match &dense {
        Some(d) => d,
        None => &kb,
    };

    let params = cfg.generation_params();
    let afg_opts = AfgOptions {
        params: params.clone(),
        abstention: cfg
            .abstention_patterns
            .as_ref()
            .map_or_else(AbstentionDetector::default, AbstentionDetector::new),
        reasoning_tags: match &cfg.reasoning_tags {
            None => AfgOptions::default().reasoning_tags,
            Some(t) if t.is_empty() => None,
            Some(t) => Some((t[0].clone(), t[1].clone())),
        },
    };
    let afv_opts = AfvOptions {
        params,
        top_k: cfg.top_k_passages,
        ..AfvOptions::default()
    };

    let mut fact_rows: Vec<FactSetRecord> = Vec::new();
    let mut verdict_rows: Vec<VerdictRecord> = Vec::new();
    let mut topics: Vec<TopicReport> = Vec::new();
    let mut topic_failed = false;
    let (mut calls_ok, mut calls_unreachable, mut calls_failed) = (0usize, 0usize, 0usize);
    for gen in &generations {
        let facts = generate_facts(afg_backend.as_ref(), gen, &demos, &afg_opts);
        let outcome = validate_all(afv_backend.as_ref(), retriever, &gen.topic, &facts, &strategy, &afv_opts);
        fact_rows.extend(facts.to_records());
        verdict_rows.extend(outcome.verdicts.iter().map(|v| VerdictRecord::new(&gen.topic, v)));

        calls_ok += facts.sentences.len() + outcome.verdicts.len();
        for unreachable in facts
            .failures
            .iter()
            .map(|f| f.unreachable)
            .chain(outcome.failures.iter().map(|f| f.unreachable))
        {
            calls_failed += 1;
            calls_unreachable += usize::from(unreachable);
        }
        let afg_all_failed = !facts.failures.is_empty() && facts.sentences.is_empty();
        let afv_all_failed = !outcome.failures.is_empty() && outcome.verdicts.is_empty();
        topic_failed |= afg_all_failed || afv_all_failed;

        let labels: Vec<Label> = outcome.verdicts.iter().map(|v| v.verdict.label).collect();
        topics.push(TopicReport::new(
            gen.topic.clone(),
            &labels,
            facts.abstained,
            facts.failures.len() + outcome.failures.len(),
        ));
    }

    let model_name = args
        .model_name
        .clone()
        .or_else(|| cfg.model_name.clone())
        .unwrap_or_else(|| file_stem(&args.generations));
    let (record, table) = match aggregate(topics.clone(), &model_name) {
        Ok(r) => (r.to_record(), r.render_table()),
        Err(e) => {
            let rec = RunReportRecord::undefined(&model_name, &topics);
            let table = format!("{e}; no score produced ({} failures)\n", rec.total_failures);
            (rec, table)
        }
    };

    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    write_records(&out.join(FACTS_FILE), &fact_rows)?;
    write_records(&out.join(VERDICTS_FILE), &verdict_rows)?;
    write_records(&out.join(REPORT_FILE), std::slice::from_ref(&record))?;
    let log: Vec<_> = afg_backend
        .run_log()
        .records()
        .into_iter()
        .chain(if Arc::ptr_eq(&afg_backend, &afv_backend) {
            Vec::new()
        } else {
            afv_backend.run_log().records()
        })
        .collect();
    write_records(&out.join(RUN_LOG_FILE), &log)?;
    let mut inputs: Vec<&Path> = vec![&cfg.kb_store_path, &cfg.demo_pool_path, &args.generations];
    let scripts: Vec<PathBuf> = [&cfg.afg_backend, &cfg.afv_backend]
        .into_iter()
        .chain(cfg.embedding_backend.as_ref())
        .filter_map(|b| b.script.clone())
        .collect();
    inputs.extend(scripts.iter().map(PathBuf::as_path));
    write_manifest(out, command, cfg.seed, cfg, &inputs)?;

    let exit_code = if calls_failed > 0 && calls_ok == 0 && calls_unreachable == calls_failed {
        EXIT_UNREACHABLE
    } else if topic_failed {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    };
    Ok(ScoreOutcome {
        report: record,
        exit_code,
        table,
        output_dir: out.clone(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AfgEvalReport {
    pub scorer: String,
    pub mode: String,
    /// Mean best-match similarity over all scored units of all topics.
    pub mean: Option<f64>,
    pub scored: usize,
    pub per_topic: BTreeMap<String, f64>,
    pub unmatched_topics: Vec<String>,
    pub diagnostics: Vec<String>,
}

pub fn cmd_eval_afg(cfg: &RunConfig, facts_path: &Path, annotations_path: &Path, mode: MatchMode) -> Result<AfgEvalReport, CliError> {
    require_file(facts_path, "fact-set file")?;
    require_file(annotations_path, "annotation file")?;
    let (rows, bad): (Vec<FactSetRecord>, _) = read_records(facts_path)?;
    if let Some(b) = bad.first() {
        return Err(CliError::Failed(format!("{}:{}: {}", facts_path.display(), b.line, b.message)));
    }
    let sets = FactSet::from_records(&rows);
    let records = load_annotations(annotations_path).map_err(|e| CliError::Failed(e.to_string()))?;
    let embed_backend;
    let scorer: Box<dyn Similarity + '_> = match cfg.scorer.as_str() {
        "embedding-f1" => {
            let b = cfg
                .embedding_backend
                .as_ref()
                .ok_or_else(|| CliError::Config("embedding-f1 needs an embedding_backend".into()))?;
            embed_backend = connect_cfg(b, &None, "embedding_backend")?;
            Box::new(EmbeddingF1 {
                backend: embed_backend.as_ref(),
            })
        }
        _ => Box::new(TokenF1),
    };
    let mut report = AfgEvalReport {
        scorer: cfg.scorer.clone(),
        mode: format!("{mode:?}"),
        mean: None,
        scored: 0,
        per_topic: BTreeMap::new(),
        unmatched_topics: Vec::new(),
        diagnostics: Vec::new(),
    };
    let mut all = Vec::new();
    for set in sets.iter().filter(|s| !s.abstained) {
        let Some(ann) = records.iter().find(|r| r.topic == set.topic) else {
            report.unmatched_topics.push(set.topic.clone());
            continue;
        };
        match best_match_scores(set, &ann.annotations, scorer.as_ref(), mode) {
            Ok(bm) => {
                if let Some(m) = bm.mean() {
                    report.per_topic.insert(set.topic.clone(), m);
                }
                all.extend(bm.scores);
                report.diagnostics.extend(bm.diagnostics);
            }
            Err(e) => report.diagnostics.push(format!("{}: {e}", set.topic)),
        }
    }
    report.scored = all.len();
    report.mean = (!all.is_empty()).then(|| all.iter().sum::<f64>() / all.len() as f64);
    let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    bytes.push(b'\n');
    write_atomic(&cfg.output_dir.join("afg_eval.json"), &bytes)?;
    write_manifest(&cfg.output_dir, "eval-afg", cfg.seed, cfg, &[facts_path, annotations_path])?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct AfvCellInput {
    pub evaluator: String,
    pub subject: String,
    pub verdicts: PathBuf,
    pub annotations: PathBuf,
}

/// Per-topic mean of supported / validated facts in a verdict file, in percent.
pub fn estimated_factscore(verdicts: &[VerdictRecord]) -> Option<f64> {
    let mut per_topic: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for v in verdicts {
        let e = per_topic.entry(&v.topic).or_default();
        e.0 += usize::from(v.label.is_supported());
        e.1 += 1;
    }
    (!per_topic.is_empty()).then(|| {
        100.0 * per_topic.values().map(|&(s, n)| s as f64 / n as f64).sum::<f64>() / per_topic.len() as f64
    })
}

pub fn cmd_eval_afv(cfg: &RunConfig, cells: &[AfvCellInput]) -> Result<ErTable, CliError> {
    let mut er_cells = Vec::new();
    let mut inputs: Vec<&Path> = Vec::new();
    for c in cells {
        require_file(&c.verdicts, "verdict file")?;
        require_file(&c.annotations, "annotation file")?;
        let (verdicts, bad): (Vec<VerdictRecord>, _) = read_records(&c.verdicts)?;
        if let Some(b) = bad.first() {
            return Err(CliError::Failed(format!("{}:{}: {}", c.verdicts.display(), b.line, b.message)));
        }
        let estimated = estimated_factscore(&verdicts)
            .ok_or_else(|| CliError::Failed(format!("{} has no verdicts", c.verdicts.display())))?;
        let records = load_annotations(&c.annotations).map_err(|e| CliError::Failed(e.to_string()))?;
        let human = human_factscore(&records).map_err(|e| CliError::Failed(e.to_string()))?;
        er_cells.push(ErCell {
            evaluator: c.evaluator.clone(),
            subject: c.subject.clone(),
            human_fs: human,
            estimated_fs: estimated,
        });
        inputs.push(&c.verdicts);
        inputs.push(&c.annotations);
    }
    let table = ErTable::new(&er_cells).map_err(|e| CliError::Failed(e.to_string()))?;
    write_records(&cfg.output_dir.join("afv_eval.jsonl"), &er_cells)?;
    write_manifest(&cfg.output_dir, "eval-afv", cfg.seed, cfg, &inputs)?;
    Ok(table)
}

/// Model name and score from any report line; other fields are ignored.
#[derive(Debug, Clone, Deserialize)]
struct ScoreRow {
    model_name: String,
    factscore_pct: Option<f64>,
}

pub fn load_score_column(path: &Path) -> Result<ScoreVector, CliError> {
    require_file(path, "report file")?;
    let (rows, bad): (Vec<ScoreRow>, _) = read_records(path)?;
    if let Some(b) = bad.first() {
        return Err(CliError::Failed(format!("{}:{}: {}", path.display(), b.line, b.message)));
    }
    Ok(ScoreVector::new(
        rows.into_iter()
            .filter_map(|r| r.factscore_pct.map(|s| (r.model_name, s))),
    ))
}

pub fn cmd_correlate(cfg: &RunConfig, columns: &[(String, PathBuf)]) -> Result<Vec<CorrelationRow>, CliError> {
    if columns.len() < 2 {
        return Err(CliError::Config("correlate needs at least two --column values".into()));
    }
    let cols = columns
        .iter()
        .map(|(n, p)| Ok((n.clone(), load_score_column(p)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let rows = correlate_columns(&cols).map_err(|e| CliError::Failed(e.to_string()))?;
    write_records(&cfg.output_dir.join("correlation.jsonl"), &rows)?;
    let inputs: Vec<&Path> = columns.iter().map(|(_, p)| p.as_path()).collect();
    write_manifest(&cfg.output_dir, "correlate", cfg.seed, cfg, &inputs)?;
    Ok(rows)
}
