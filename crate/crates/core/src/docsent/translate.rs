use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use crate::error::{ElsaError, Result};
use crate::textprep::{prepare_text, DefaultSegmenter, Language};

/// A deterministic sentence-level translator.
pub trait TranslationOracle: Send + Sync {
    fn name(&self) -> &str;
    fn translate(&self, sentence: &str, source: &Language, target: &Language) -> Result<String>;
}

/// Returns every sentence unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl TranslationOracle for IdentityTranslator {
    fn name(&self) -> &str {
        "identity"
    }

    fn translate(&self, sentence: &str, _: &Language, _: &Language) -> Result<String> {
        Ok(sentence.to_string())
    }
}

/// Token-by-token word map per language direction. Tokens without an entry
/// pass through unchanged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DictionaryTranslator {
    maps: BTreeMap<(Language, Language), HashMap<String, String>>,
}

/// Reads `source TAB target` lines. Blank lines are skipped.
pub fn read_dictionary_tsv<R: BufRead>(reader: R) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ElsaError::io("<dictionary>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        match line.split('\t').collect::<Vec<_>>().as_slice() {
            [s, t] if !s.trim().is_empty() && !t.trim().is_empty() => {
                pairs.push((s.trim().to_string(), t.trim().to_string()))
            }
            _ => {
                return Err(ElsaError::Data(format!(
                    "dictionary line {}: expected `source<TAB>target`",
                    lineno + 1
                )))
            }
        }
    }
    Ok(pairs)
}

impl DictionaryTranslator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers the word map for `source → target`.
    pub fn insert_direction<I>(&mut self, source: Language, target: Language, pairs: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut map = HashMap::new();
        for (s, t) in pairs {
            if map.insert(s.clone(), t).is_some() {
                return Err(ElsaError::DuplicateKey(format!("{source}→{target} entry `{s}`")));
            }
        }
        self.maps.insert((source, target), map);
        Ok(())
    }

    /// Adds `target → source` by inverting an existing direction. Target
    /// words reached from several source words are left out.
    pub fn insert_inverse(&mut self, source: &Language, target: &Language) -> Result<()> {
        let forward = self
            .maps
            .get(&(source.clone(), target.clone()))
            .ok_or_else(|| ElsaError::Config(format!("no {source}→{target} dictionary")))?;
        let mut seen: HashMap<&str, Option<&str>> = HashMap::new();
        for (s, t) in forward {
            seen.entry(t.as_str())
                .and_modify(|e| *e = None)
                .or_insert(Some(s.as_str()));
        }
        let inverse: HashMap<String, String> = seen
            .into_iter()
            .filter_map(|(t, s)| s.map(|s| (t.to_string(), s.to_string())))
            .collect();
        self.maps.insert((target.clone(), source.clone()), inverse);
        Ok(())
    }

    pub fn lookup(&self, source: &Language, target: &Language, token: &str) -> Option<&str> {
        self.maps
            .get(&(source.clone(), target.clone()))
            .and_then(|m| m.get(token))
            .map(String::as_str)
    }

    pub fn directions(&self) -> impl Iterator<Item = &(Language, Language)> {
        self.maps.keys()
    }
}

impl TranslationOracle for DictionaryTranslator {
    fn name(&self) -> &str {
        "dictionary"
    }

    fn translate(&self, sentence: &str, source: &Language, target: &Language) -> Result<String> {
        if source == target {
            return Ok(sentence.to_string());
        }
        let map = self
            .maps
            .get(&(source.clone(), target.clone()))
            .ok_or_else(|| ElsaError::Config(format!("no {source}→{target} dictionary")))?;
        let tokens = prepare_text(sentence, &DefaultSegmenter);
        let out: Vec<&str> = tokens
            .iter()
            .map(|t| map.get(t).map(String::as_str).unwrap_or(t))
            .collect();
        Ok(out.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn en() -> Language {
        Language::new("en")
    }
    fn de() -> Language {
        Language::new("de")
    }

    fn dict() -> DictionaryTranslator {
        let mut d = DictionaryTranslator::new();
        d.insert_direction(
            en(),
            de(),
            vec![("good".into(), "gut".into()), ("book".into(), "buch".into())],
        )
        .unwrap();
        d.insert_inverse(&en(), &de()).unwrap();
        d
    }

    #[test]
    fn maps_known_words_and_passes_unknown_through() {
        let d = dict();
        assert_eq!(d.translate("Good book, @bob!", &en(), &de()).unwrap(), "gut buch , <mention> !");
        assert_eq!(d.translate("gut und buch", &de(), &en()).unwrap(), "good und book");
    }

    #[test]
    fn round_trip_on_bijective_words() {
        let d = dict();
        let there = d.translate("good book", &en(), &de()).unwrap();
        assert_eq!(d.translate(&there, &de(), &en()).unwrap(), "good book");
    }

    #[test]
    fn inverse_drops_collisions() {
        let mut d = DictionaryTranslator::new();
        d.insert_direction(
            en(),
            de(),
            vec![("fine".into(), "gut".into()), ("good".into(), "gut".into()), ("a".into(), "ein".into())],
        )
        .unwrap();
        d.insert_inverse(&en(), &de()).unwrap();
        assert_eq!(d.lookup(&de(), &en(), "gut"), None);
        assert_eq!(d.lookup(&de(), &en(), "ein"), Some("a"));
    }

    #[test]
    fn missing_direction_is_config_error() {
        let d = DictionaryTranslator::new();
        assert!(matches!(d.translate("x", &en(), &de()), Err(ElsaError::Config(_))));
        assert_eq!(d.translate("x", &en(), &en()).unwrap(), "x");
    }

    #[test]
    fn tsv_parsing() {
        let pairs = read_dictionary_tsv("a\tb\n\nc\td\n".as_bytes()).unwrap();
        assert_eq!(pairs, vec![("a".into(), "b".into()), ("c".into(), "d".into())]);
        assert!(read_dictionary_tsv("a b\n".as_bytes()).is_err());
        let mut d = DictionaryTranslator::new();
        assert!(matches!(
            d.insert_direction(en(), de(), vec![("a".into(), "b".into()), ("a".into(), "c".into())]),
            Err(ElsaError::DuplicateKey(_))
        ));
    }
}
