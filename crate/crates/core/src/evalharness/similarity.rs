//! Similarity between generated and human-written atomic facts.

use super::annotations::SentenceAnnotation;
use super::{EvalError, Result};
use crate::afg::FactSet;
use crate::backends::Backend;
use crate::retrieval::tokenize;
use std::collections::HashMap;

/// A symmetric or candidate/reference similarity in `[0, 1]`.
pub trait Similarity {
    fn score(&self, candidate: &str, reference: &str) -> Result<f64>;
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// F1 over multiset token overlap. Both empty scores 1, one empty scores 0.
pub fn token_f1(a: &str, b: &str) -> f64 {
    let ta = tokenize(a);
    let tb = tokenize(b);
    match (ta.is_empty(), tb.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &tb {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &ta {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    f1(overlap as f64 / ta.len() as f64, overlap as f64 / tb.len() as f64)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TokenF1;

impl Similarity for TokenF1 {
    fn score(&self, candidate: &str, reference: &str) -> Result<f64> {
        Ok(token_f1(candidate, reference))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Greedy matching over whitespace-token embeddings: each candidate token
/// takes its best cosine match among reference tokens (precision) and vice
/// versa (recall). No idf weighting.
pub fn greedy_embedding_f1(candidate: &str, reference: &str, backend: &dyn Backend) -> Result<f64> {
    let ct: Vec<String> = candidate.split_whitespace().map(str::to_owned).collect();
    let rt: Vec<String> = reference.split_whitespace().map(str::to_owned).collect();
    match (ct.is_empty(), rt.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let mut unique: Vec<String> = ct.iter().chain(&rt).cloned().collect();
    unique.sort();
    unique.dedup();
    let vectors = backend.embed(&unique)?;
    let lookup = |t: &String| &vectors[unique.binary_search(t).expect("token embedded")];
    let cv: Vec<&Vec<f64>> = ct.iter().map(lookup).collect();
    let rv: Vec<&Vec<f64>> = rt.iter().map(lookup).collect();
    let greedy = |from: &[&Vec<f64>], to: &[&Vec<f64>]| {
        from.iter()
            .map(|a| to.iter().map(|b| dot(a, b)).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / from.len() as f64
    };
    Ok(f1(greedy(&cv, &rv), greedy(&rv, &cv)))
}

pub struct EmbeddingF1<'a> {
    pub backend: &'a dyn Backend,
}

impl Similarity for EmbeddingF1<'_> {
    fn score(&self, candidate: &str, reference: &str) -> Result<f64> {
        greedy_embedding_f1(candidate, reference, self.backend)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MatchMode {
    /// Each generated fact takes its best human match; the mean is over facts.
    #[default]
    PerFact,
    /// Each sentence takes its best generated/human pair; the mean is over sentences.
    PerSentence,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BestMatch {
    /// One best-match value per scored unit (fact or sentence).
    pub scores: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl BestMatch {
    pub fn mean(&self) -> Option<f64> {
        (!self.scores.is_empty()).then(|| self.scores.iter().sum::<f64>() / self.scores.len() as f64)
    }
}

/// Aligns generated sentences with annotated sentences: by index when the
/// sentence counts agree, otherwise by exact (trimmed) text.
fn align<'a>(generated: &FactSet, annotated: &'a [SentenceAnnotation], diagnostics: &mut Vec<String>) -> Vec<(usize, &'a SentenceAnnotation)> {
    let total = generated.sentences.len() + generated.failures.len();
    let by_index = total == annotated.len();
    let mut out = Vec::new();
    for (pos, s) in generated.sentences.iter().enumerate() {
        let found = if by_index {
            annotated.get(s.sentence.index)
        } else {
            annotated.iter().find(|a| a.text.trim() == s.sentence.text.trim())
        };
        match found {
            Some(a) => out.push((pos, a)),
            None => diagnostics.push(format!(
                "{}: sentence {} has no annotated counterpart",
                generated.topic, s.sentence.index
            )),
        }
    }
    out
}

/// Best-match similarity of generated facts against the human facts of the
/// aligned sentence.
pub fn best_match_scores(
    generated: &FactSet,
    annotated: &[SentenceAnnotation],
    scorer: &dyn Similarity,
    mode: MatchMode,
) -> Result<BestMatch> {
    let mut out = BestMatch::default();
    let pairs = align(generated, annotated, &mut out.diagnostics);
    if pairs.is_empty() {
        return Err(EvalError::NoAlignedSentences);
    }
    for (pos, ann) in pairs {
        let sf = &generated.sentences[pos];
        if ann.human_facts.is_empty() {
            if !sf.facts.is_empty() {
                out.diagnostics.push(format!(
                    "{}: sentence {} has no human facts",
                    generated.topic, sf.sentence.index
                ));
            }
            continue;
        }
        let mut sentence_best = f64::NEG_INFINITY;
        for fact in &sf.facts {
            let mut best = f64::NEG_INFINITY;
            for h in &ann.human_facts {
                best = best.max(scorer.score(&fact.text, &h.text)?);
            }
            sentence_best = sentence_best.max(best);
            if mode == MatchMode::PerFact {
                out.scores.push(best);
            }
        }
        if mode == MatchMode::PerSentence && !sf.facts.is_empty() {
            out.scores.push(sentence_best);
        }
    }
    Ok(out)
}

/// Mean best-match similarity for one generation.
pub fn afg_best_match(
    generated: &FactSet,
    annotated: &[SentenceAnnotation],
    scorer: &dyn Similarity,
) -> Result<f64> {
    best_match_scores(generated, annotated, scorer, MatchMode::PerFact)?
        .mean()
        .ok_or(EvalError::NoAlignedSentences)
}
