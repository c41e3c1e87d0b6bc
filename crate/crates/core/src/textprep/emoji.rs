use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{ElsaError, Result};
use crate::textprep::{is_emoji_token, Language, TokenSequence};

/// Default number of emoji classes per language.
pub const DEFAULT_EMOJI_CLASSES: usize = 64;

/// The most frequent emojis of one language, in rank order. The rank is the
/// class id used by emoji prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmojiVocabulary {
    pub language: Language,
    entries: Vec<String>,
    index: HashMap<String, usize>,
}

impl EmojiVocabulary {
    pub fn from_entries(language: Language, entries: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if !is_emoji_token(e) {
                return Err(ElsaError::Data(format!("{e:?} is not a single emoji")));
            }
            if index.insert(e.clone(), i).is_some() {
                return Err(ElsaError::DuplicateKey(e.clone()));
            }
        }
        if entries.is_empty() {
            return Err(ElsaError::Size("emoji vocabulary is empty".into()));
        }
        Ok(EmojiVocabulary {
            language,
            entries,
            index,
        })
    }

    /// Ranks emojis by the number of tweets containing them (descending),
    /// breaking ties by codepoint order, and keeps the first `k`.
    pub fn build<'a, I>(language: Language, tweets: I, k: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a TokenSequence>,
    {
        if k == 0 {
            return Err(ElsaError::Config("emoji class count must be positive".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for tweet in tweets {
            let distinct: HashSet<&str> = tweet.iter().filter(|t| is_emoji_token(t)).collect();
            for e in distinct {
                *counts.entry(e).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(ElsaError::EmptyCorpus);
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(k);
        Self::from_entries(
            language,
            ranked.into_iter().map(|(e, _)| e.to_string()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn class_of(&self, emoji: &str) -> Option<usize> {
        self.index.get(emoji).copied()
    }

    pub fn emoji(&self, class: usize) -> Option<&str> {
        self.entries.get(class).map(String::as_str)
    }

    /// The on-disk form: a JSON list of strings in rank order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("string list serializes")
    }

    pub fn from_json(language: Language, json: &str) -> Result<Self> {
        let entries: Vec<String> = serde_json::from_str(json)?;
        Self::from_entries(language, entries)
    }
}

/// One emoji-labeled training sentence: the text with every emoji removed
/// and a single emoji class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmojiExample {
    pub tokens: TokenSequence,
    pub emoji_class: usize,
}

/// Strips all emojis from a tweet and emits one example per distinct
/// in-vocabulary emoji, in order of first occurrence.
pub fn extract_emoji_examples(tokens: &TokenSequence, vocab: &EmojiVocabulary) -> Vec<EmojiExample> {
    let text: TokenSequence = tokens.iter().filter(|t| !is_emoji_token(t)).collect();
    if text.is_empty() {
        return Vec::new();
    }
    let mut classes: Vec<usize> = Vec::new();
    for t in tokens.iter() {
        if let Some(c) = vocab.class_of(t) {
            if !classes.contains(&c) {
                classes.push(c);
            }
        }
    }
    classes
        .into_iter()
        .map(|emoji_class| EmojiExample {
            tokens: text.clone(),
            emoji_class,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &[&str]) -> TokenSequence {
        s.iter().copied().collect()
    }

    fn vocab(entries: &[&str]) -> EmojiVocabulary {
        EmojiVocabulary::from_entries(
            Language::new("en"),
            entries.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn duplicate_emojis_collapse() {
        let v = vocab(&["😊", "🎉"]);
        let ex = extract_emoji_examples(&seq(&["good", "😊", "day", "😊"]), &v);
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].tokens, seq(&["good", "day"]));
        assert_eq!(ex[0].emoji_class, 0);
    }

    #[test]
    fn one_example_per_unique_emoji() {
        let v = vocab(&["😊", "🎉"]);
        let ex = extract_emoji_examples(&seq(&["good", "😊", "day", "🎉"]), &v);
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].tokens, ex[1].tokens);
        assert_eq!((ex[0].emoji_class, ex[1].emoji_class), (0, 1));
    }

    #[test]
    fn no_emoji_no_examples() {
        let v = vocab(&["😊"]);
        assert!(extract_emoji_examples(&seq(&["good", "day"]), &v).is_empty());
        assert!(extract_emoji_examples(&seq(&["😊"]), &v).is_empty());
    }

    #[test]
    fn out_of_vocabulary_emojis_are_stripped_and_ignored() {
        let v = vocab(&["😊"]);
        let ex = extract_emoji_examples(&seq(&["ok", "🙃", "😊"]), &v);
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].tokens, seq(&["ok"]));
        assert!(extract_emoji_examples(&seq(&["ok", "🙃"]), &v).is_empty());
    }

    #[test]
    fn ranking_counts_tweets_with_codepoint_tiebreak() {
        let tweets = vec![
            seq(&["a", "🎉", "🎉", "🎉"]),
            seq(&["b", "😊"]),
            seq(&["c", "😊", "🎉"]),
            seq(&["d", "👍"]),
        ];
        let v = EmojiVocabulary::build(Language::new("en"), &tweets, 64).unwrap();
        // 🎉 (U+1F389) and 😊 (U+1F60A) both occur in two tweets.
        assert_eq!(v.entries(), ["🎉", "😊", "👍"]);
        let top2 = EmojiVocabulary::build(Language::new("en"), &tweets, 2).unwrap();
        assert_eq!(top2.len(), 2);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let v = vocab(&["😊", "🎉"]);
        let back = EmojiVocabulary::from_json(Language::new("en"), &v.to_json()).unwrap();
        assert_eq!(back, v);
        assert!(matches!(
            EmojiVocabulary::from_json(Language::new("en"), r#"["😊","😊"]"#),
            Err(ElsaError::DuplicateKey(_))
        ));
    }
}
