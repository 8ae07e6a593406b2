//! Text and record renderings of evaluation results.

use super::metrics::{cumulative_error_rate, error_rate, pearson, spearman_rank, ScoreVector};
use super::Result;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Human and estimated scores (percent) for one evaluator on one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErCell {
    pub evaluator: String,
    pub subject: String,
    pub human_fs: f64,
    pub estimated_fs: f64,
}

impl ErCell {
    pub fn er(&self) -> f64 {
        error_rate(self.human_fs, self.estimated_fs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErRow {
    pub evaluator: String,
    /// `(subject, er, estimated_fs)` in subject column order.
    pub cells: Vec<(String, f64, f64)>,
    pub cumulative_er: f64,
}

/// Error rates per (evaluator, subject), with a human reference row and the
/// cumulative error per evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErTable {
    pub subjects: Vec<String>,
    pub human: Vec<f64>,
    pub rows: Vec<ErRow>,
}

impl ErTable {
    pub fn new(cells: &[ErCell]) -> Result<Self> {
        let mut subjects: Vec<String> = Vec::new();
        let mut evaluators: Vec<String> = Vec::new();
        for c in cells {
            if !subjects.contains(&c.subject) {
                subjects.push(c.subject.clone());
            }
            if !evaluators.contains(&c.evaluator) {
                evaluators.push(c.evaluator.clone());
            }
        }
        let human = subjects
            .iter()
            .map(|s| {
                cells
                    .iter()
                    .find(|c| &c.subject == s)
                    .map_or(f64::NAN, |c| c.human_fs)
            })
            .collect();
        let mut rows = Vec::new();
        for e in evaluators {
            let row_cells: Vec<(String, f64, f64)> = subjects
                .iter()
                .filter_map(|s| {
                    cells
                        .iter()
                        .find(|c| c.evaluator == e && &c.subject == s)
                        .map(|c| (s.clone(), c.er(), c.estimated_fs))
                })
                .collect();
            let ers: Vec<f64> = row_cells.iter().map(|c| c.1).collect();
            rows.push(ErRow {
                evaluator: e,
                cumulative_er: cumulative_error_rate(&ers)?,
                cells: row_cells,
            });
        }
        Ok(Self {
            subjects,
            human,
            rows,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<12}", "evaluator");
        for s in &self.subjects {
            let _ = write!(out, " | {:>16}", s);
        }
        let _ = writeln!(out, " | {:>10}", "cumulative");
        let _ = write!(out, "{:<12}", "");
        for _ in &self.subjects {
            let _ = write!(out, " | {:>7} {:>8}", "ER", "FS");
        }
        let _ = writeln!(out, " | {:>10}", "ER");
        let _ = write!(out, "{:<12}", "Human");
        for h in &self.human {
            let _ = write!(out, " | {:>7.1} {:>8.2}", 0.0, h);
        }
        let _ = writeln!(out, " | {:>10}", "");
        for r in &self.rows {
            let _ = write!(out, "{:<12}", r.evaluator);
            for s in &self.subjects {
                match r.cells.iter().find(|c| &c.0 == s) {
                    Some((_, er, fs)) => {
                        let _ = write!(out, " | {:>7.1} {:>8.2}", er, fs);
                    }
                    None => {
                        let _ = write!(out, " | {:>7} {:>8}", "-", "-");
                    }
                }
            }
            let _ = writeln!(out, " | {:>10.1}", r.cumulative_er);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub reference: String,
    pub other: String,
    pub n: usize,
    pub pearson: f64,
    pub spearman: f64,
}

/// Pearson and Spearman of every column against the first, over the labels
/// present in all columns (in the first column's order).
pub fn correlate_columns(columns: &[(String, ScoreVector)]) -> Result<Vec<CorrelationRow>> {
    let Some((ref_name, reference)) = columns.first() else {
        return Ok(Vec::new());
    };
    let shared: Vec<String> = reference
        .labels
        .iter()
        .filter(|l| columns.iter().all(|(_, c)| c.labels.contains(l)))
        .cloned()
        .collect();
    let x = reference.select(&shared).expect("shared labels exist");
    columns[1..]
        .iter()
        .map(|(name, col)| {
            let y = col.select(&shared).expect("shared labels exist");
            Ok(CorrelationRow {
                reference: ref_name.clone(),
                other: name.clone(),
                n: shared.len(),
                pearson: pearson(&x, &y)?,
                spearman: spearman_rank(&x, &y)?,
            })
        })
        .collect()
}

pub fn render_correlations(rows: &[CorrelationRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:<16} {:>4} {:>9} {:>9}", "reference", "other", "n", "pearson", "spearman");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<16} {:<16} {:>4} {:>9.4} {:>9.4}",
            r.reference, r.other, r.n, r.pearson, r.spearman
        );
    }
    out
}
