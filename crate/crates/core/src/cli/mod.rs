//! Command-line entry points.

pub mod commands;
pub mod config;
pub mod manifest;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use thiserror::Error;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;
pub const EXIT_UNREACHABLE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Failed(_) => EXIT_FAILURE,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "factscore", version, about = "Atomic-fact factual precision scoring")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Validation strategy: parse, logits, or ensemble.
    #[arg(long, global = true)]
    pub strategy: Option<String>,
    /// Fact similarity scorer: token-f1 or embedding-f1.
    #[arg(long, global = true)]
    pub scorer: Option<String>,
    /// Passages retrieved per fact.
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Mirror backend traffic to this file (score) or replay from it (replay).
    #[arg(long, global = true)]
    pub trace: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chunk a line-delimited {title, text} dump into a passage store.
    Ingest {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        chunk_size: Option<usize>,
    },
    /// Generate facts, validate them, and score every generation.
    Score(ScoreArgs),
    /// Re-run `score` with every backend answered from a trace file.
    Replay(ScoreArgs),
    /// Best-match similarity of generated facts against human facts.
    EvalAfg {
        #[arg(long)]
        facts: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// Take the best pair per sentence instead of per generated fact.
        #[arg(long)]
        per_sentence: bool,
    },
    /// Error rate of estimated scores against human scores.
    EvalAfv {
        /// Verdict files, one per cell.
        #[arg(long, required = true)]
        verdicts: Vec<PathBuf>,
        /// Annotation files, aligned with --verdicts.
        #[arg(long, required = true)]
        annotations: Vec<PathBuf>,
        /// Evaluator names, aligned with --verdicts.
        #[arg(long)]
        evaluator: Vec<String>,
        /// Subject names, aligned with --verdicts.
        #[arg(long)]
        subject: Vec<String>,
    },
    /// Pearson and Spearman correlation between report score columns.
    Correlate {
        /// NAME=PATH of a line-delimited report file; the first column is the reference.
        #[arg(long = "column", required = true, num_args = 1)]
        columns: Vec<String>,
    },
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub generations: PathBuf,
    /// Name of the evaluated model in the report.
    #[arg(long)]
    pub model_name: Option<String>,
}

impl Cli {
    /// Loads the config file (if any) and applies flag overrides.
    pub fn resolve_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).map_err(CliError::Config)?,
            None => RunConfig::default(),
        };
        if let Some(s) = &self.strategy {
            cfg.strategy.clone_from(s);
        }
        if let Some(s) = &self.scorer {
            cfg.scorer.clone_from(s);
        }
        if let Some(k) = self.top_k {
            cfg.top_k_passages = k;
        }
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir.clone_from(d);
        }
        cfg.validate().map_err(CliError::Config)?;
        Ok(cfg)
    }
}

/// Runs the parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match commands::dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
