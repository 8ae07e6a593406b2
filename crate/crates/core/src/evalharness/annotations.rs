//! Human-annotated generations.
//!
//! Each line holds `input`, `output`, `topic`, and `annotations`, a list of
//! `{text, is-relevant, human-atomic-facts: [{text, label}]}`. Labels are
//! matched case-insensitively ("Supported", "Not-supported", "S", "NS");
//! anything else (e.g. "IR") leaves the fact unlabeled.

use super::{EvalError, Result};
use crate::afv::Label;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::io::{BufRead, BufReader};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanFact {
    pub text: String,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceAnnotation {
    pub text: String,
    pub is_relevant: bool,
    pub human_facts: Vec<HumanFact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub input: String,
    pub output: String,
    pub topic: String,
    pub annotations: Vec<SentenceAnnotation>,
}

impl AnnotationRecord {
    /// Labels of facts in relevant sentences.
    pub fn relevant_labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.annotations
            .iter()
            .filter(|a| a.is_relevant)
            .flat_map(|a| a.human_facts.iter().filter_map(|f| f.label))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub records: Vec<AnnotationRecord>,
    /// Records whose `annotations` field was null or missing.
    pub null_annotations: usize,
    /// `(line, message)` for lines that could not be decoded.
    pub malformed: Vec<(usize, String)>,
}

fn str_field<'a>(v: &'a Value, key: &str) -> Option<&'a str> {
    v.get(key).and_then(Value::as_str)
}

fn parse_sentence(v: &Value) -> std::result::Result<SentenceAnnotation, String> {
    let text = str_field(v, "text").ok_or("sentence annotation without text")?;
    let is_relevant = v
        .get("is-relevant")
        .or_else(|| v.get("is_relevant"))
        .and_then(Value::as_bool)
        .unwrap_or(true);
    let facts = match v.get("human-atomic-facts").or_else(|| v.get("human_atomic_facts")) {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|f| {
                let text = str_field(f, "text").ok_or("human fact without text")?;
                Ok(HumanFact {
                    text: text.to_owned(),
                    label: str_field(f, "label").and_then(Label::parse),
                })
            })
            .collect::<std::result::Result<_, String>>()?,
        Some(_) => return Err("human-atomic-facts is not a list".into()),
    };
    Ok(SentenceAnnotation {
        text: text.to_owned(),
        is_relevant,
        human_facts: facts,
    })
}

fn parse_record(line: &str) -> std::result::Result<Option<AnnotationRecord>, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let topic = str_field(&v, "topic").filter(|t| !t.is_empty()).ok_or("missing topic")?;
    let annotations = match v.get("annotations") {
        None | Some(Value::Null) => return Ok(None),
        Some(Value::Array(a)) => a.iter().map(parse_sentence).collect::<std::result::Result<Vec<_>, _>>()?,
        Some(_) => return Err("annotations is not a list".into()),
    };
    Ok(Some(AnnotationRecord {
        input: str_field(&v, "input").unwrap_or_default().to_owned(),
        output: str_field(&v, "output").unwrap_or_default().to_owned(),
        topic: topic.to_owned(),
        annotations,
    }))
}

/// Loads an annotation file, tallying null and malformed records.
pub fn load_annotations_report(path: &Path) -> Result<LoadReport> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut report = LoadReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line) {
            Ok(Some(r)) => report.records.push(r),
            Ok(None) => report.null_annotations += 1,
            Err(e) => {
                log::warn!("{}:{}: skipped annotation record: {e}", path.display(), i + 1);
                report.malformed.push((i + 1, e));
            }
        }
    }
    if report.records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    Ok(report)
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    Ok(load_annotations_report(path)?.records)
}

fn per_record_counts(records: &[AnnotationRecord]) -> Vec<(usize, usize)> {
    records
        .iter()
        .map(|r| {
            r.relevant_labels()
                .fold((0, 0), |(s, n), l| (s + usize::from(l.is_supported()), n + 1))
        })
        .filter(|&(_, n)| n > 0)
        .collect()
}

/// Human score in percent: mean over records of supported / labeled, counting
/// only facts in relevant sentences. Records without labeled facts are skipped.
pub fn human_factscore(records: &[AnnotationRecord]) -> Result<f64> {
    let counts = per_record_counts(records);
    if counts.is_empty() {
        return Err(EvalError::NoLabeledFacts);
    }
    let sum: f64 = counts.iter().map(|&(s, n)| s as f64 / n as f64).sum();
    Ok(100.0 * sum / counts.len() as f64)
}

/// Same facts as [`human_factscore`], pooled before dividing.
pub fn human_factscore_micro(records: &[AnnotationRecord]) -> Result<f64> {
    let counts = per_record_counts(records);
    if counts.is_empty() {
        return Err(EvalError::NoLabeledFacts);
    }
    let (s, n) = counts.iter().fold((0, 0), |(a, b), &(s, n)| (a + s, b + n));
    Ok(100.0 * s as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ann.jsonl");
        std::fs::write(&p, lines.join("\n")).unwrap();
        (dir, p)
    }

    fn record(topic: &str, sentences: Vec<(bool, Vec<Label>)>) -> AnnotationRecord {
        AnnotationRecord {
            input: String::new(),
            output: String::new(),
            topic: topic.into(),
            annotations: sentences
                .into_iter()
                .map(|(rel, labels)| SentenceAnnotation {
                    text: "s".into(),
                    is_relevant: rel,
                    human_facts: labels
                        .into_iter()
                        .map(|l| HumanFact {
                            text: "f".into(),
                            label: Some(l),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    use Label::{NotSupported as NS, Supported as S};

    #[test]
    fn scores() {
        let one = vec![record("a", vec![(true, vec![S, S, NS])])];
        assert!((human_factscore(&one).unwrap() - 200.0 / 3.0).abs() < 1e-12);
        let two = vec![record("a", vec![(true, vec![S])]), record("b", vec![(true, vec![S, NS])])];
        assert_eq!(human_factscore(&two).unwrap(), 75.0);
        let skip = vec![record("a", vec![(true, vec![S]), (false, vec![NS, NS])])];
        assert_eq!(human_factscore(&skip).unwrap(), 100.0);
        assert!(matches!(human_factscore(&[record("a", vec![])]), Err(EvalError::NoLabeledFacts)));
    }

    #[test]
    fn loads_schema_and_tallies() {
        let (_d, p) = write(&[
            r#"{"input":"Question: Tell me a bio of Ada.","output":"Ada was a mathematician. She liked cats.","topic":"Ada","extra":1,
               "annotations":[{"text":"Ada was a mathematician.","is-relevant":true,"human-atomic-facts":[{"text":"Ada was a mathematician.","label":"Supported"}]},
                              {"text":"She liked cats.","is-relevant":false,"human-atomic-facts":[{"text":"She liked cats.","label":"not-supported"}]}]}"#
                .replace('\n', " ")
                .as_str(),
            r#"{"input":"x","output":"I'm sorry","topic":"Bob","annotations":null}"#,
            "garbage",
        ]);
        let rep = load_annotations_report(&p).unwrap();
        assert_eq!(rep.records.len(), 1);
        assert_eq!(rep.null_annotations, 1);
        assert_eq!(rep.malformed.len(), 1);
        let r = &rep.records[0];
        assert!(!r.annotations[1].is_relevant);
        assert_eq!(r.annotations[1].human_facts[0].label, Some(NS));
        assert_eq!(human_factscore(&rep.records).unwrap(), 100.0);
    }

    #[test]
    fn empty_file_is_error() {
        let (_d, p) = write(&[]);
        assert!(matches!(load_annotations(&p), Err(EvalError::NoRecords)));
    }
}
