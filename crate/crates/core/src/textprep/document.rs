use std::fmt;
use std::io::{BufRead, Write};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{ElsaError, Result};
use crate::textprep::{normalize_text, split_sentences, tokenize, Segmenter, TokenSequence};

/// Language tag such as `en` or `ja`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Language(String);

impl Language {
    pub fn new(tag: impl Into<String>) -> Self {
        Language(tag.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawText {
    pub text: String,
    pub language: Language,
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)(?:https?://|\bwww\.[\p{L}\p{N}-]+\.[\p{L}\p{N}])").expect("url regex")
    })
}

/// Keep/drop decision for a raw tweet: retweets and tweets carrying URLs are
/// dropped.
pub fn filter_tweet(raw: &RawText) -> bool {
    let t = raw.text.trim_start();
    let is_retweet = t.len() >= 3 && t[..3].eq_ignore_ascii_case("rt ");
    !(is_retweet || url_re().is_match(&raw.text))
}

/// Normalize then segment.
pub fn prepare_text(text: &str, segmenter: &dyn Segmenter) -> TokenSequence {
    tokenize(&normalize_text(text), segmenter)
}

/// A labeled review or tweet. `sentences` are derived from `raw`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDocument {
    pub id: String,
    pub raw: String,
    /// Raw text of each kept sentence, aligned with `sentences`.
    pub sentence_texts: Vec<String>,
    pub sentences: Vec<TokenSequence>,
    pub label: usize,
    pub language: Language,
}

impl LabeledDocument {
    pub fn from_text(
        id: impl Into<String>,
        raw: impl Into<String>,
        label: usize,
        language: Language,
        segmenter: &dyn Segmenter,
    ) -> Result<Self> {
        let raw = raw.into();
        let id = id.into();
        let (sentence_texts, sentences): (Vec<String>, Vec<TokenSequence>) =
            split_sentences(&raw)
                .into_iter()
                .map(|s| {
                    let t = prepare_text(&s, segmenter);
                    (s, t)
                })
                .filter(|(_, t)| !t.is_empty())
                .unzip();
        if sentences.is_empty() {
            return Err(ElsaError::Data(format!("document {id} has no tokens")));
        }
        Ok(LabeledDocument {
            id,
            raw,
            sentence_texts,
            sentences,
            label,
            language,
        })
    }
}

/// Sentence split, normalize and tokenize; empty sentences are dropped.
pub fn document_sentences(raw: &str, segmenter: &dyn Segmenter) -> Vec<TokenSequence> {
    split_sentences(raw)
        .iter()
        .map(|s| prepare_text(s, segmenter))
        .filter(|t| !t.is_empty())
        .collect()
}

/// One line of the labeled-documents JSON-lines format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub label: usize,
    pub language: String,
}

pub fn read_labeled_jsonl<R: BufRead>(
    reader: R,
    class_count: usize,
    segmenter: &dyn Segmenter,
) -> Result<Vec<LabeledDocument>> {
    let mut docs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ElsaError::io("<labeled documents>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabeledRecord = serde_json::from_str(&line)
            .map_err(|e| ElsaError::Data(format!("line {}: {e}", lineno + 1)))?;
        if rec.label >= class_count {
            return Err(ElsaError::Data(format!(
                "line {}: label {} outside [0, {class_count})",
                lineno + 1,
                rec.label
            )));
        }
        let id = rec.id.unwrap_or_else(|| docs.len().to_string());
        docs.push(LabeledDocument::from_text(
            id,
            rec.text,
            rec.label,
            Language::new(rec.language),
            segmenter,
        )?);
    }
    Ok(docs)
}

pub fn write_labeled_jsonl<W: Write>(mut w: W, records: &[LabeledRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
