//! Atomic fact generation: sentence splitting, abstention detection, prompt
//! assembly, and parsing of the returned fact lists.

use crate::backends::{Backend, ChatMessage, GenerationParams};
use crate::prompts::{fill, AFG_SYSTEM_TEMPLATE, AFG_USER_TEMPLATE};
use crate::retrieval::DemoSelector;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// One subject-model response to be scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectGeneration {
    pub topic: String,
    #[serde(default)]
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicFact {
    pub text: String,
    pub sentence_index: usize,
    pub fact_index: usize,
}

/// A human-written demonstration: a sentence and its atomic facts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoEntry {
    pub sentence: String,
    pub facts: Vec<String>,
}

pub fn split_sentences(output: &str) -> Vec<Sentence> {
    crate::text::split_sentences(output)
        .into_iter()
        .enumerate()
        .map(|(index, text)| Sentence { text, index })
        .collect()
}

pub const DEFAULT_ABSTENTION_PATTERNS: &[&str] = &[
    "I'm sorry",
    "I am sorry",
    "I could not find",
    "I couldn't find",
    "I don't have information",
    "I apologize",
    "as an AI",
    "no information",
];

fn fold_for_match(s: &str) -> String {
    s.replace(['\u{2019}', '\u{2018}'], "'").to_lowercase()
}

/// Case-insensitive phrase matcher applied to the first two sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstentionDetector {
    patterns: Vec<String>,
}

impl Default for AbstentionDetector {
    fn default() -> Self {
        Self::new(DEFAULT_ABSTENTION_PATTERNS.iter().copied())
    }
}

impl AbstentionDetector {
    pub fn new<I, S>(patterns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            patterns: patterns
                .into_iter()
                .map(|p| fold_for_match(p.as_ref()))
                .filter(|p| !p.is_empty())
                .collect(),
        }
    }

    pub fn detect(&self, output: &str) -> bool {
        let head = crate::text::split_sentences(output)
            .into_iter()
            .take(2)
            .collect::<Vec<_>>()
            .join(" ");
        let head = fold_for_match(&head);
        self.patterns.iter().any(|p| head.contains(p.as_str()))
    }
}

pub fn detect_abstention(output: &str) -> bool {
    AbstentionDetector::default().detect(output)
}

fn render_demo(demo: &DemoEntry) -> String {
    let mut out = demo.sentence.clone();
    for f in &demo.facts {
        out.push_str("\n- ");
        out.push_str(f);
    }
    out
}

/// System message with the demo block, user message with the sentence.
pub fn build_afg_prompt(sentence: &Sentence, demo: &DemoEntry) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(fill(AFG_SYSTEM_TEMPLATE, "<demo>", &render_demo(demo))),
        ChatMessage::user(fill(AFG_USER_TEMPLATE, "<sentence>", &sentence.text)),
    ]
}

/// Removes the leading list marker (`-`, `*`, `•`, `12.` or `12)`) from a
/// line, or returns `None` when the line is not a list item.
fn strip_marker(line: &str) -> Option<&str> {
    let s = line.trim_start();
    let rest = if let Some(r) = s.strip_prefix(['-', '*', '\u{2022}']) {
        r
    } else {
        let digits = s.len() - s.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits == 0 {
            return None;
        }
        s[digits..].strip_prefix(['.', ')'])?
    };
    if rest.is_empty() || rest.starts_with(char::is_whitespace) {
        Some(rest)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub sentence_index: usize,
    pub message: String,
    pub raw_output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedFacts {
    pub facts: Vec<AtomicFact>,
    pub diagnostic: Option<ParseDiagnostic>,
}

/// Extracts list items from a model's fact list. Preamble lines, empty items,
/// exact duplicates, and lines restating the instruction are dropped.
pub fn parse_atomic_facts(model_output: &str, sentence_index: usize) -> ParsedFacts {
    let mut seen = HashSet::new();
    let mut facts = Vec::new();
    for line in model_output.lines() {
        let Some(mut item) = strip_marker(line) else {
            continue;
        };
        item = item.trim();
        while let Some(inner) = strip_marker(item) {
            item = inner.trim();
        }
        if item.is_empty() || item.to_lowercase().contains("independent facts") {
            continue;
        }
        if seen.insert(item.to_owned()) {
            facts.push(AtomicFact {
                text: item.to_owned(),
                sentence_index,
                fact_index: facts.len(),
            });
        }
    }
    let diagnostic = facts.is_empty().then(|| ParseDiagnostic {
        sentence_index,
        message: "no list items found in fact-generation output".into(),
        raw_output: model_output.to_owned(),
    });
    ParsedFacts { facts, diagnostic }
}

/// Drops every `open ... close` block. Text is returned unchanged unless both
/// tags occur.
pub fn strip_reasoning(text: &str, open: &str, close: &str) -> String {
    if open.is_empty() || close.is_empty() || !text.contains(open) || !text.contains(close) {
        return text.to_owned();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find(open) {
        let after_open = &rest[start + open.len()..];
        let Some(end) = after_open.find(close) else {
            break;
        };
        out.push_str(&rest[..start]);
        rest = &after_open[end + close.len()..];
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceFacts {
    pub sentence: Sentence,
    pub facts: Vec<AtomicFact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceFailure {
    pub sentence: Sentence,
    pub error: String,
    #[serde(default)]
    pub unreachable: bool,
}

/// Atomic facts of one generation, keyed by sentence order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FactSet {
    pub topic: String,
    pub abstained: bool,
    pub sentences: Vec<SentenceFacts>,
    pub failures: Vec<SentenceFailure>,
    #[serde(default)]
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl FactSet {
    pub fn facts(&self) -> impl Iterator<Item = &AtomicFact> {
        self.sentences.iter().flat_map(|s| s.facts.iter())
    }

    pub fn fact_count(&self) -> usize {
        self.sentences.iter().map(|s| s.facts.len()).sum()
    }

    pub fn to_records(&self) -> Vec<FactSetRecord> {
        if self.abstained {
            return vec![FactSetRecord {
                topic: self.topic.clone(),
                sentence_index: None,
                sentence: String::new(),
                facts: Vec::new(),
                abstained: true,
                failures: Vec::new(),
            }];
        }
        let mut rows: Vec<FactSetRecord> = self
            .sentences
            .iter()
            .map(|s| FactSetRecord {
                topic: self.topic.clone(),
                sentence_index: Some(s.sentence.index),
                sentence: s.sentence.text.clone(),
                facts: s.facts.iter().map(|f| f.text.clone()).collect(),
                abstained: false,
                failures: Vec::new(),
            })
            .chain(self.failures.iter().map(|f| FactSetRecord {
                topic: self.topic.clone(),
                sentence_index: Some(f.sentence.index),
                sentence: f.sentence.text.clone(),
                facts: Vec::new(),
                abstained: false,
                failures: vec![f.error.clone()],
            }))
            .collect();
        rows.sort_by_key(|r| r.sentence_index);
        rows
    }

    /// Regroups records by topic, preserving first-appearance topic order.
    pub fn from_records(records: &[FactSetRecord]) -> Vec<FactSet> {
        let mut sets: Vec<FactSet> = Vec::new();
        for r in records {
            let pos = match sets.iter().position(|s| s.topic == r.topic) {
                Some(p) => p,
                None => {
                    sets.push(FactSet {
                        topic: r.topic.clone(),
                        ..Default::default()
                    });
                    sets.len() - 1
                }
            };
            let set = &mut sets[pos];
            if r.abstained {
                set.abstained = true;
                continue;
            }
            let Some(index) = r.sentence_index else { continue };
            let sentence = Sentence {
                text: r.sentence.clone(),
                index,
            };
            if let Some(err) = r.failures.first() {
                set.failures.push(SentenceFailure {
                    sentence,
                    error: err.clone(),
                    unreachable: false,
                });
            } else {
                let facts = r
                    .facts
                    .iter()
                    .enumerate()
                    .map(|(fact_index, text)| AtomicFact {
                        text: text.clone(),
                        sentence_index: index,
                        fact_index,
                    })
                    .collect();
                set.sentences.push(SentenceFacts { sentence, facts });
            }
        }
        sets
    }
}

/// One line of a fact-set file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactSetRecord {
    pub topic: String,
    pub sentence_index: Option<usize>,
    pub sentence: String,
    pub facts: Vec<String>,
    pub abstained: bool,
    #[serde(default)]
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AfgOptions {
    pub params: GenerationParams,
    pub abstention: AbstentionDetector,
    /// Open/close tag pair whose enclosed text is dropped before parsing.
    pub reasoning_tags: Option<(String, String)>,
}

impl Default for AfgOptions {
    fn default() -> Self {
        Self {
            params: GenerationParams::default(),
            abstention: AbstentionDetector::default(),
            reasoning_tags: Some(("<think>".into(), "</think>".into())),
        }
    }
}

/// Decomposes one generation into atomic facts, one backend call per
/// sentence. A failed call is recorded and the remaining sentences proceed.
pub fn generate_facts(
    backend: &dyn Backend,
    gen: &SubjectGeneration,
    demos: &DemoSelector,
    opts: &AfgOptions,
) -> FactSet {
    let mut set = FactSet {
        topic: gen.topic.clone(),
        ..Default::default()
    };
    if opts.abstention.detect(&gen.output) {
        set.abstained = true;
        return set;
    }
    let sentences = split_sentences(&gen.output);
    let results = crate::pool::parallel_map(&sentences, backend.parallelism(), |_, sentence| {
        let messages = build_afg_prompt(sentence, demos.select(&sentence.text));
        backend.chat(&messages, &opts.params)
    });
    for (sentence, result) in sentences.into_iter().zip(results) {
        match result {
            Ok(raw) => {
                let text = match &opts.reasoning_tags {
                    Some((open, close)) => strip_reasoning(&raw, open, close),
                    None => raw,
                };
                let parsed = parse_atomic_facts(&text, sentence.index);
                if let Some(d) = parsed.diagnostic {
                    set.diagnostics.push(d);
                }
                set.sentences.push(SentenceFacts {
                    sentence,
                    facts: parsed.facts,
                });
            }
            Err(e) => set.failures.push(SentenceFailure {
                unreachable: e.is_unreachable(),
                error: e.to_string(),
                sentence,
            }),
        }
    }
    set
}
