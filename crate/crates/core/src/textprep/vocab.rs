use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{ElsaError, Result};
use crate::textprep::{TokenSequence, MENTION_TOKEN, NUMBER_TOKEN, PAD_TOKEN, UNK_TOKEN};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const MENTION_ID: usize = 2;
pub const NUMBER_ID: usize = 3;

/// Dense token ↔ id mapping. Ids 0..4 are the special tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    min_count: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    min_count: usize,
    tokens: Vec<String>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_tokens(r.tokens, r.min_count)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            min_count: v.min_count,
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its id-ordered token list. The first four
    /// entries are replaced by the special tokens if they differ.
    pub fn from_tokens(tokens: Vec<String>, min_count: usize) -> Self {
        let mut all: Vec<String> = [PAD_TOKEN, UNK_TOKEN, MENTION_TOKEN, NUMBER_TOKEN]
            .iter()
            .map(|s| s.to_string())
            .collect();
        all.extend(tokens.into_iter().filter(|t| !is_special(t)));
        let index = all
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            index,
            tokens: all,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Id of `token`, or [`UNK_ID`] when it is not in the vocabulary.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode(&self, seq: &TokenSequence) -> Vec<usize> {
        seq.iter().map(|t| self.id(t)).collect()
    }
}

fn is_special(t: &str) -> bool {
    matches!(t, PAD_TOKEN | UNK_TOKEN | MENTION_TOKEN | NUMBER_TOKEN)
}

/// Builds a vocabulary whose non-special ids follow descending frequency
/// with lexicographic tiebreak; tokens seen fewer than `min_count` times
/// are left out and map to UNK.
pub fn build_vocab<'a, I>(corpus: I, min_count: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a TokenSequence>,
{
    if min_count == 0 {
        return Err(ElsaError::Config("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut seen_any = false;
    for seq in corpus {
        for t in seq.iter() {
            seen_any = true;
            *counts.entry(t).or_default() += 1;
        }
    }
    if !seen_any {
        return Err(ElsaError::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count && !is_special(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(Vocabulary::from_tokens(
        ranked.into_iter().map(|(t, _)| t.to_string()).collect(),
        min_count,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(words: &[&str]) -> Vec<TokenSequence> {
        vec![words.iter().copied().collect()]
    }

    #[test]
    fn frequency_order() {
        let v = build_vocab(&corpus(&["a", "b", "a"]), 1).unwrap();
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), 5);
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn threshold_maps_to_unk() {
        let v = build_vocab(&corpus(&["a", "a", "b"]), 2).unwrap();
        assert!(!v.contains("b"));
        assert_eq!(v.id("b"), UNK_ID);
        assert_eq!(v.id("a"), 4);
    }

    #[test]
    fn lexicographic_tiebreak() {
        let v = build_vocab(&corpus(&["b", "a", "b", "a"]), 1).unwrap();
        assert_eq!(v.token(4), Some("a"));
        assert_eq!(v.token(5), Some("b"));
    }

    #[test]
    fn specials_always_present() {
        let v = build_vocab(&corpus(&["<mention>", "x"]), 1).unwrap();
        assert_eq!(v.id("<mention>"), MENTION_ID);
        assert_eq!(v.id("<pad>"), PAD_ID);
        assert_eq!(v.id("<number>"), NUMBER_ID);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn empty_corpus_rejected() {
        let empty: Vec<TokenSequence> = vec![];
        assert!(matches!(build_vocab(&empty, 1), Err(ElsaError::EmptyCorpus)));
    }

    #[test]
    fn serde_round_trip() {
        let v = build_vocab(&corpus(&["a", "b", "a"]), 1).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
