use std::sync::OnceLock;

use regex::Regex;

use crate::textprep::{MENTION_TOKEN, NUMBER_TOKEN};

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@[\p{L}\p{N}_]+").expect("mention regex"))
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[+-]?[0-9]+(?:\.[0-9]+)?$").expect("number regex"))
}

/// True iff `s` is an optionally signed run of digits with at most one
/// decimal point.
pub fn is_numeric(s: &str) -> bool {
    number_re().is_match(s)
}

const LEADING_PUNCT: &[char] = &['(', '[', '"', '\''];
const TRAILING_PUNCT: &[char] = &[
    '.', ',', '!', '?', ';', ':', ')', ']', '"', '\'', '。', '！', '？', '、',
];

/// Lowercases, replaces mentions and standalone numbers by their special
/// tokens, then compresses any run of more than two identical characters to
/// exactly two. Emoji are left in place.
pub fn normalize_text(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let mentions = mention_re().replace_all(&lowered, MENTION_TOKEN);
    let numbers = replace_numbers(&mentions);
    compress_elongation(&numbers)
}

fn replace_numbers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chunk = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            out.push_str(&rewrite_chunk(&chunk));
            chunk.clear();
            out.push(ch);
        } else {
            chunk.push(ch);
        }
    }
    out.push_str(&rewrite_chunk(&chunk));
    out
}

fn rewrite_chunk(chunk: &str) -> String {
    let core_start = chunk.len() - chunk.trim_start_matches(LEADING_PUNCT).len();
    let rest = &chunk[core_start..];
    let core = rest.trim_end_matches(TRAILING_PUNCT);
    if !core.is_empty() && is_numeric(core) {
        format!(
            "{}{}{}",
            &chunk[..core_start],
            NUMBER_TOKEN,
            &rest[core.len()..]
        )
    } else {
        chunk.to_string()
    }
}

/// "cooooool" → "cool": runs longer than two collapse to two.
pub fn compress_elongation(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev: Option<char> = None;
    let mut run = 0usize;
    for ch in text.chars() {
        if Some(ch) == prev {
            run += 1;
        } else {
            prev = Some(ch);
            run = 1;
        }
        if run <= 2 {
            out.push(ch);
        }
    }
    out
}
