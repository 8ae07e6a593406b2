//! Per-topic factual precision and run-level aggregation.

use crate::afv::Label;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("no topic has a defined score")]
    NoDefinedTopics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicReport {
    pub topic: String,
    pub num_facts: usize,
    pub num_supported: usize,
    /// Supported / total; `None` when there are no facts or the topic abstained.
    pub factscore: Option<f64>,
    pub abstained: bool,
    pub failures: usize,
}

impl TopicReport {
    pub fn new(topic: impl Into<String>, labels: &[Label], abstained: bool, failures: usize) -> Self {
        let (num_supported, num_facts, factscore) = topic_factscore(labels);
        Self {
            topic: topic.into(),
            num_facts,
            num_supported,
            factscore: if abstained { None } else { factscore },
            abstained,
            failures,
        }
    }
}

/// `(supported, total, supported / total)`, the ratio undefined on no facts.
pub fn topic_factscore(labels: &[Label]) -> (usize, usize, Option<f64>) {
    let supported = labels.iter().filter(|l| l.is_supported()).count();
    let total = labels.len();
    let score = (total > 0).then(|| supported as f64 / total as f64);
    (supported, total, score)
}

/// Pools every fact of every topic into one ratio. Reported for comparison
/// only; the run score is the per-topic mean.
pub fn micro_factscore(reports: &[TopicReport]) -> Option<f64> {
    let (s, n) = reports
        .iter()
        .filter(|r| !r.abstained)
        .fold((0, 0), |(s, n), r| (s + r.num_supported, n + r.num_facts));
    (n > 0).then(|| s as f64 / n as f64)
}

/// Adjusts a topic score given its fact count. Not applied unless supplied.
pub trait ScorePenalty {
    fn adjust(&self, factscore: f64, num_facts: usize) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model_name: String,
    pub topic_reports: Vec<TopicReport>,
    pub factscore: f64,
    pub respond_ratio: f64,
    pub avg_facts_per_response: f64,
    pub total_failures: usize,
}

pub fn aggregate(reports: Vec<TopicReport>, model_name: &str) -> Result<RunReport, ScoringError> {
    aggregate_with(reports, model_name, None)
}

/// Macro average of defined topic scores. Abstained topics count against
/// `respond_ratio` but not the mean.
pub fn aggregate_with(
    reports: Vec<TopicReport>,
    model_name: &str,
    penalty: Option<&dyn ScorePenalty>,
) -> Result<RunReport, ScoringError> {
    let defined: Vec<f64> = reports
        .iter()
        .filter_map(|r| {
            r.factscore
                .map(|s| penalty.map_or(s, |p| p.adjust(s, r.num_facts).clamp(0.0, 1.0)))
        })
        .collect();
    if defined.is_empty() {
        return Err(ScoringError::NoDefinedTopics);
    }
    let responded: Vec<&TopicReport> = reports.iter().filter(|r| !r.abstained).collect();
    let avg_facts = if responded.is_empty() {
        0.0
    } else {
        responded.iter().map(|r| r.num_facts).sum::<usize>() as f64 / responded.len() as f64
    };
    Ok(RunReport {
        model_name: model_name.to_owned(),
        factscore: defined.iter().sum::<f64>() / defined.len() as f64,
        respond_ratio: responded.len() as f64 / reports.len() as f64,
        avg_facts_per_response: avg_facts,
        total_failures: reports.iter().map(|r| r.failures).sum(),
        topic_reports: reports,
    })
}

fn pct(x: f64) -> f64 {
    (x * 10000.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRecord {
    pub topic: String,
    pub num_facts: usize,
    pub num_supported: usize,
    pub factscore_pct: Option<f64>,
    pub abstained: bool,
    pub failures: usize,
}

impl From<&TopicReport> for TopicRecord {
    fn from(t: &TopicReport) -> Self {
        Self {
            topic: t.topic.clone(),
            num_facts: t.num_facts,
            num_supported: t.num_supported,
            factscore_pct: t.factscore.map(pct),
            abstained: t.abstained,
            failures: t.failures,
        }
    }
}

impl RunReportRecord {
    /// Record for a run where aggregation failed because no topic was scored.
    pub fn undefined(model_name: &str, topics: &[TopicReport]) -> Self {
        let responded = topics.iter().filter(|t| !t.abstained).count();
        Self {
            model_name: model_name.to_owned(),
            factscore_pct: None,
            respond_ratio: if topics.is_empty() {
                0.0
            } else {
                ((responded as f64 / topics.len() as f64) * 10000.0).round() / 10000.0
            },
            avg_facts_per_response: 0.0,
            total_failures: topics.iter().map(|t| t.failures).sum(),
            per_topic: topics.iter().map(TopicRecord::from).collect(),
        }
    }
}

/// Serialized form of a [`RunReport`], with scores as percentages rounded to
/// two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReportRecord {
    pub model_name: String,
    /// `None` when no topic had a defined score.
    pub factscore_pct: Option<f64>,
    pub respond_ratio: f64,
    pub avg_facts_per_response: f64,
    pub total_failures: usize,
    pub per_topic: Vec<TopicRecord>,
}

impl RunReport {
    pub fn factscore_pct(&self) -> f64 {
        pct(self.factscore)
    }

    pub fn to_record(&self) -> RunReportRecord {
        RunReportRecord {
            model_name: self.model_name.clone(),
            factscore_pct: Some(self.factscore_pct()),
            respond_ratio: (self.respond_ratio * 10000.0).round() / 10000.0,
            avg_facts_per_response: (self.avg_facts_per_response * 100.0).round() / 100.0,
            total_failures: self.total_failures,
            per_topic: self.topic_reports.iter().map(TopicRecord::from).collect(),
        }
    }

    /// Plain-text table for terminal output.
    pub fn render_table(&self) -> String {
        let width = self
            .topic_reports
            .iter()
            .map(|t| t.topic.chars().count())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>9}  {:>8}  {:>8}", "topic", "facts", "supported", "FS", "failures");
        for t in &self.topic_reports {
            let fs = match (t.abstained, t.factscore) {
                (true, _) => "abstain".to_owned(),
                (false, Some(s)) => format!("{:.2}", pct(s)),
                (false, None) => "-".to_owned(),
            };
            let _ = writeln!(
                out,
                "{:<width$}  {:>6}  {:>9}  {:>8}  {:>8}",
                t.topic, t.num_facts, t.num_supported, fs, t.failures
            );
        }
        let _ = writeln!(out, "model: {}", self.model_name);
        let _ = writeln!(out, "FActScore: {:.2}", self.factscore_pct());
        let _ = writeln!(out, "respond ratio: {:.4}", self.respond_ratio);
        let _ = writeln!(out, "facts per response: {:.2}", self.avg_facts_per_response);
        let _ = writeln!(out, "failures: {}", self.total_failures);
        out
    }
}
