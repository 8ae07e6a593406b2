//! Comparison of automatic estimates against human annotations.
//!
//! * [`annotations`]: the human-annotated generation records and human scores.
//! * [`metrics`]: error rate, cumulative error rate, and rank/linear correlation.
//! * [`similarity`]: token-overlap and greedy embedding F1 scorers, and the
//!   best-match comparison of generated facts against human facts.
//! * [`report`]: text tables for error rates and correlations.

pub mod annotations;
pub mod metrics;
pub mod report;
pub mod similarity;

use crate::backends::BackendError;
use thiserror::Error;

pub use annotations::{human_factscore, load_annotations, AnnotationRecord, HumanFact, SentenceAnnotation};
pub use metrics::{cumulative_error_rate, error_rate, pearson, spearman_rank, ScoreVector};
pub use similarity::{afg_best_match, greedy_embedding_f1, token_f1, MatchMode, Similarity};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no valid annotation records")]
    NoRecords,
    #[error("no labeled facts to score")]
    NoLabeledFacts,
    #[error("score vectors need at least 2 aligned values, got {0}")]
    TooShort(usize),
    #[error("score vectors have different labels or lengths")]
    Misaligned,
    #[error("score vector has zero variance")]
    ZeroVariance,
    #[error("score vector contains a non-finite value")]
    NonFinite,
    #[error("no generated sentence could be aligned with an annotated sentence")]
    NoAlignedSentences,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

pub type Result<T> = std::result::Result<T, EvalError>;
