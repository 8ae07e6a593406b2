//! Shared text utilities: whitespace normalization and sentence segmentation.

use std::collections::HashSet;
use std::sync::OnceLock;

/// Titles and short forms that end in a period but never end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "jr", "sr", "st", "prof", "rev", "gen", "col", "capt", "lt", "sgt",
    "gov", "sen", "rep", "hon", "mt", "ft", "vs", "jan", "feb", "apr", "jun", "jul", "aug", "sep",
    "sept", "oct", "nov", "dec", "approx", "ca", "cf", "fig", "dept", "univ", "assn", "est",
];

fn abbreviations() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| ABBREVIATIONS.iter().copied().collect())
}

/// Collapses every run of whitespace to one ASCII space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201D}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201C}' | '\u{2018}')
}

/// True when the whitespace-delimited token ending at a period is a protected
/// abbreviation: a listed title ("Dr."), a single initial ("J."), or a dotted
/// acronym ("U.S.", "M.I.T.").
fn is_protected(token: &str) -> bool {
    let token = token.trim_start_matches(is_opener);
    let Some(stem) = token.strip_suffix('.') else {
        return false;
    };
    if stem.is_empty() {
        return false;
    }
    if abbreviations().contains(stem.to_lowercase().as_str()) {
        return true;
    }
    stem.split('.')
        .all(|seg| seg.chars().count() == 1 && seg.chars().all(char::is_alphabetic))
}

/// Byte ranges `[start, end)` of the sentences in `text`, untrimmed at the
/// start but ending right after the terminal punctuation run.
fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let punct_pos = i;
        let mut j = i + 1;
        while j < chars.len() && (is_terminal(chars[j].1) || is_closer(chars[j].1)) {
            j += 1;
        }
        let end_byte = chars.get(j).map_or(text.len(), |&(b, _)| b);
        let boundary = if j == chars.len() {
            true
        } else if chars[j].1.is_whitespace() {
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            if k == chars.len() {
                true
            } else {
                let mut next = chars[k].1;
                if is_opener(next) && k + 1 < chars.len() {
                    next = chars[k + 1].1;
                }
                next.is_uppercase() || next.is_ascii_digit()
            }
        } else {
            false
        };
        let protected = boundary && chars[punct_pos].1 == '.' && j == punct_pos + 1 && {
            let tok_start = text[..end_byte]
                .char_indices()
                .rev()
                .find(|(_, c)| c.is_whitespace())
                .map_or(0, |(p, c)| p + c.len_utf8());
            is_protected(&text[tok_start.max(start)..end_byte])
        };
        if boundary && !protected {
            spans.push((start, end_byte));
            start = end_byte;
        }
        i = j;
    }
    if start < text.len() {
        spans.push((start, text.len()));
    }
    spans
}

/// Splits text into trimmed, non-empty sentences in order.
///
/// A boundary is terminal punctuation (`.`, `!`, `?`, optionally followed by
/// closing quotes or brackets) followed by whitespace and then an uppercase
/// letter, a digit, or the end of the text. Periods closing a protected
/// abbreviation never split.
pub fn split_sentences(text: &str) -> Vec<String> {
    sentence_spans(text)
        .into_iter()
        .map(|(s, e)| text[s..e].trim())
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}
