//! Atomic fact validation against retrieved knowledge-base passages.

use crate::afg::{AtomicFact, FactSet};
use crate::backends::{Backend, BackendError, ChatMessage, GenerationParams};
use crate::corpus::Passage;
use crate::prompts::{fill, AFV_ANSWER_CUE, AFV_QUESTION, AFV_SYSTEM_PROMPT, AFV_USER_HEADER_TEMPLATE};
use crate::retrieval::{PassageRetriever, DEFAULT_TOP_K};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Supported,
    NotSupported,
}

impl Label {
    pub fn is_supported(self) -> bool {
        self == Label::Supported
    }

    /// Parses "Supported" / "Not-supported" style labels, case-insensitively.
    pub fn parse(s: &str) -> Option<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        match norm.as_str() {
            "supported" | "s" | "true" => Some(Label::Supported),
            "notsupported" | "ns" | "false" | "unsupported" => Some(Label::NotSupported),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Parse,
    Logits,
    Ensemble,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitScores {
    pub logprob_true: f64,
    pub logprob_false: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub strategy: StrategyKind,
    pub raw_response: String,
    pub passage_titles: Vec<String>,
    pub scores: Option<LogitScores>,
    /// Neither "true" nor "false" appeared in the response.
    #[serde(default)]
    pub no_answer: bool,
    /// Member verdicts of an ensemble, empty otherwise.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<Verdict>,
}

impl Verdict {
    pub fn new(label: Label, strategy: StrategyKind) -> Self {
        Self {
            label,
            strategy,
            raw_response: String::new(),
            passage_titles: Vec::new(),
            scores: None,
            no_answer: false,
            members: Vec::new(),
        }
    }
}

/// A verdict source the pipeline does not implement itself, such as a
/// masked-language-model likelihood scorer. Plugs into an ensemble.
pub trait VerdictSource: Send + Sync {
    fn name(&self) -> &str;
    fn verdict(&self, topic: &str, fact: &AtomicFact, passages: &[Passage]) -> Result<Verdict, BackendError>;
}

/// A non-ensemble way of producing a verdict.
#[derive(Clone)]
pub enum MemberStrategy {
    Parse,
    Logits,
    External(Arc<dyn VerdictSource>),
}

impl fmt::Debug for MemberStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemberStrategy::Parse => f.write_str("Parse"),
            MemberStrategy::Logits => f.write_str("Logits"),
            MemberStrategy::External(s) => write!(f, "External({})", s.name()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ValidationStrategy {
    Single(MemberStrategy),
    Ensemble(MemberStrategy, MemberStrategy),
}

impl ValidationStrategy {
    pub fn parse() -> Self {
        Self::Single(MemberStrategy::Parse)
    }

    pub fn logits() -> Self {
        Self::Single(MemberStrategy::Logits)
    }

    /// Output parsing ensembled with logit comparison.
    pub fn ensemble() -> Self {
        Self::Ensemble(MemberStrategy::Parse, MemberStrategy::Logits)
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "parse" => Some(Self::parse()),
            "logits" => Some(Self::logits()),
            "ensemble" => Some(Self::ensemble()),
            _ => None,
        }
    }
}

/// System prompt plus a user message carrying the topic, one `[Title: ]` /
/// `[Text: ]` pair per passage in rank order, the fact, and the question.
pub fn build_afv_prompt(entity: &str, fact: &AtomicFact, passages: &[Passage]) -> Vec<ChatMessage> {
    let mut user = fill(AFV_USER_HEADER_TEMPLATE, "<entity>", entity);
    for p in passages {
        user.push_str("\n[Title: ");
        user.push_str(&p.doc_title);
        user.push_str("]\n[Text: ");
        user.push_str(&p.text);
        user.push(']');
    }
    user.push('\n');
    user.push_str(&fact.text);
    user.push('\n');
    user.push_str(AFV_QUESTION);
    user.push('\n');
    user.push_str(AFV_ANSWER_CUE);
    vec![ChatMessage::system(AFV_SYSTEM_PROMPT), ChatMessage::user(user)]
}

/// Byte offset of the first standalone, case-insensitive occurrence of `word`.
fn find_word(haystack: &str, word: &str) -> Option<usize> {
    let lower = haystack.to_ascii_lowercase();
    let mut from = 0;
    while let Some(rel) = lower[from..].find(word) {
        let start = from + rel;
        let end = start + word.len();
        let before_ok = lower[..start]
            .chars()
            .next_back()
            .is_none_or(|c| !c.is_alphanumeric() && c != '_');
        let after_ok = lower[end..]
            .chars()
            .next()
            .is_none_or(|c| !c.is_alphanumeric() && c != '_');
        if before_ok && after_ok {
            return Some(start);
        }
        from = start + 1;
        while !lower.is_char_boundary(from) {
            from += 1;
        }
    }
    None
}

/// Label from the earliest standalone "true" or "false" in the response.
/// A response containing neither is NotSupported with `no_answer` set.
pub fn parse_verdict(response: &str) -> Verdict {
    let t = find_word(response, "true");
    let f = find_word(response, "false");
    let (label, no_answer) = match (t, f) {
        (Some(t), Some(f)) => (if t < f { Label::Supported } else { Label::NotSupported }, false),
        (Some(_), None) => (Label::Supported, false),
        (None, Some(_)) => (Label::NotSupported, false),
        (None, None) => (Label::NotSupported, true),
    };
    Verdict {
        raw_response: response.to_owned(),
        no_answer,
        ..Verdict::new(label, StrategyKind::Parse)
    }
}

/// Parses a verdict from arbitrary bytes, decoding invalid UTF-8 lossily.
pub fn parse_verdict_bytes(response: &[u8]) -> Verdict {
    parse_verdict(&String::from_utf8_lossy(response))
}

/// Supported iff the true logit strictly exceeds the false logit.
pub fn verdict_from_scores(logprob_true: f64, logprob_false: f64) -> Verdict {
    let label = if logprob_true > logprob_false {
        Label::Supported
    } else {
        Label::NotSupported
    };
    Verdict {
        scores: Some(LogitScores {
            logprob_true,
            logprob_false,
        }),
        ..Verdict::new(label, StrategyKind::Logits)
    }
}

pub fn logit_verdict(backend: &dyn Backend, messages: &[ChatMessage]) -> Result<Verdict, BackendError> {
    let s = backend.score_candidates(messages, &["True".to_string(), "False".to_string()])?;
    Ok(verdict_from_scores(s[0], s[1]))
}

/// Supported only when both members say Supported.
pub fn ensemble_verdict(a: &Verdict, b: &Verdict) -> Verdict {
    let label = if a.label.is_supported() && b.label.is_supported() {
        Label::Supported
    } else {
        Label::NotSupported
    };
    let parse_member = [a, b].into_iter().find(|v| v.strategy == StrategyKind::Parse);
    let logit_member = [a, b].into_iter().find_map(|v| v.scores);
    let mut passage_titles = a.passage_titles.clone();
    if passage_titles.is_empty() {
        passage_titles.clone_from(&b.passage_titles);
    }
    Verdict {
        raw_response: parse_member.map(|v| v.raw_response.clone()).unwrap_or_default(),
        passage_titles,
        scores: logit_member,
        no_answer: parse_member.is_some_and(|v| v.no_answer),
        members: vec![a.clone(), b.clone()],
        ..Verdict::new(label, StrategyKind::Ensemble)
    }
}

#[derive(Debug, Clone)]
pub struct AfvOptions {
    pub params: GenerationParams,
    pub top_k: usize,
    /// Fall back to output parsing when the backend cannot score logits.
    pub logit_fallback: bool,
}

impl Default for AfvOptions {
    fn default() -> Self {
        Self {
            params: GenerationParams::default(),
            top_k: DEFAULT_TOP_K,
            logit_fallback: true,
        }
    }
}

fn run_member(
    backend: &dyn Backend,
    member: &MemberStrategy,
    topic: &str,
    fact: &AtomicFact,
    passages: &[Passage],
    messages: &[ChatMessage],
    opts: &AfvOptions,
) -> Result<Verdict, BackendError> {
    match member {
        MemberStrategy::Parse => Ok(parse_verdict(&backend.chat(messages, &opts.params)?)),
        MemberStrategy::Logits => match logit_verdict(backend, messages) {
            Err(BackendError::Capability(what)) if opts.logit_fallback => {
                log::warn!("backend lacks {what}; falling back to output parsing");
                Ok(parse_verdict(&backend.chat(messages, &opts.params)?))
            }
            other => other,
        },
        MemberStrategy::External(source) => source.verdict(topic, fact, passages),
    }
}

/// Retrieves passages for `topic + fact`, prompts, and applies `strategy`.
pub fn validate_fact(
    backend: &dyn Backend,
    kb: &dyn PassageRetriever,
    topic: &str,
    fact: &AtomicFact,
    strategy: &ValidationStrategy,
    opts: &AfvOptions,
) -> Result<Verdict, BackendError> {
    let passages = kb.retrieve_for(topic, &fact.text, opts.top_k)?;
    let messages = build_afv_prompt(topic, fact, &passages);
    let titles: Vec<String> = passages.iter().map(|p| p.doc_title.clone()).collect();
    let mut verdict = match strategy {
        ValidationStrategy::Single(m) => run_member(backend, m, topic, fact, &passages, &messages, opts)?,
        ValidationStrategy::Ensemble(a, b) => {
            let va = run_member(backend, a, topic, fact, &passages, &messages, opts)?;
            let vb = run_member(backend, b, topic, fact, &passages, &messages, opts)?;
            ensemble_verdict(&va, &vb)
        }
    };
    verdict.passage_titles = titles;
    Ok(verdict)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactVerdict {
    pub fact: AtomicFact,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactFailure {
    pub fact: AtomicFact,
    pub error: String,
    pub unreachable: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationOutcome {
    pub verdicts: Vec<FactVerdict>,
    pub failures: Vec<FactFailure>,
}

/// Validates every fact of `facts` in fact order under the backend's
/// parallelism bound. Failed facts are collected, not fatal.
pub fn validate_all(
    backend: &dyn Backend,
    kb: &dyn PassageRetriever,
    topic: &str,
    facts: &FactSet,
    strategy: &ValidationStrategy,
    opts: &AfvOptions,
) -> ValidationOutcome {
    let flat: Vec<&AtomicFact> = facts.facts().collect();
    let results = crate::pool::parallel_map(&flat, backend.parallelism(), |_, fact| {
        validate_fact(backend, kb, topic, fact, strategy, opts)
    });
    let mut out = ValidationOutcome::default();
    for (fact, r) in flat.into_iter().zip(results) {
        match r {
            Ok(verdict) => out.verdicts.push(FactVerdict {
                fact: fact.clone(),
                verdict,
            }),
            Err(e) => out.failures.push(FactFailure {
                fact: fact.clone(),
                unreachable: e.is_unreachable(),
                error: e.to_string(),
            }),
        }
    }
    out
}

/// One line of a verdict file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub topic: String,
    pub sentence_index: usize,
    pub fact_index: usize,
    pub fact: String,
    pub label: Label,
    pub strategy: StrategyKind,
    pub passage_titles: Vec<String>,
    pub raw_response: String,
    pub scores: Option<LogitScores>,
    #[serde(default)]
    pub no_answer: bool,
}

impl VerdictRecord {
    pub fn new(topic: &str, fv: &FactVerdict) -> Self {
        Self {
            topic: topic.to_owned(),
            sentence_index: fv.fact.sentence_index,
            fact_index: fv.fact.fact_index,
            fact: fv.fact.text.clone(),
            label: fv.verdict.label,
            strategy: fv.verdict.strategy,
            passage_titles: fv.verdict.passage_titles.clone(),
            raw_response: fv.verdict.raw_response.clone(),
            scores: fv.verdict.scores,
            no_answer: fv.verdict.no_answer,
        }
    }
}
