//! Synthetic bilingual corpus for desk-scale end-to-end runs.
//!
//! Two artificial languages share a bijective dictionary except for a few
//! target-only sentiment idioms. Tweets in both languages carry emojis that
//! correlate with the polarity of their sentiment words. Labeled source
//! documents only use a "seen" subset of the sentiment words; target test
//! documents use all of them, idioms included.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::docsent::ClassifierConfig;
use crate::embed::SkipGramConfig;
use crate::encoder::EncoderConfig;
use crate::error::Result;
use crate::numcore::{AdamConfig, Prng};
use crate::pipeline::checkpoint::write_file;
use crate::pipeline::config::{PipelineConfig, Precision};
use crate::textprep::LabeledRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    pub seed: u64,
    pub tweets_per_language: usize,
    pub labeled_source: usize,
    pub test_target: usize,
    /// Dictionary-translatable sentiment words per polarity.
    pub translatable_per_polarity: usize,
    /// Target-only sentiment words per polarity.
    pub idioms_per_polarity: usize,
    /// Share of translatable words that may appear in labeled documents.
    pub seen_fraction: f64,
    pub fillers: usize,
    /// Probability that a tweet's emoji comes from the opposite polarity.
    pub emoji_noise: f64,
    /// Share of target test documents whose sentiment is carried by idioms only.
    pub idiom_documents: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            seed: 7,
            tweets_per_language: 3000,
            labeled_source: 400,
            test_target: 200,
            translatable_per_polarity: 8,
            idioms_per_polarity: 2,
            seen_fraction: 0.5,
            fillers: 24,
            emoji_noise: 0.1,
            idiom_documents: 0.3,
        }
    }
}

/// Word lists of the two synthetic languages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub source_positive: Vec<String>,
    pub source_negative: Vec<String>,
    pub source_fillers: Vec<String>,
    pub target_positive: Vec<String>,
    pub target_negative: Vec<String>,
    pub target_idioms_positive: Vec<String>,
    pub target_idioms_negative: Vec<String>,
    pub target_fillers: Vec<String>,
    pub positive_emojis: Vec<String>,
    pub negative_emojis: Vec<String>,
    /// Number of leading entries of each translatable list used in labeled data.
    pub seen: usize,
}

impl Lexicon {
    pub fn new(spec: &FixtureSpec) -> Self {
        let words = |stem: &str, n: usize| (0..n).map(|i| format!("{stem}{}", letters(i))).collect::<Vec<_>>();
        let n = spec.translatable_per_polarity;
        Lexicon {
            source_positive: words("joy", n),
            source_negative: words("gloom", n),
            source_fillers: words("word", spec.fillers),
            target_positive: words("froh", n),
            target_negative: words("trist", n),
            target_idioms_positive: words("klasse", spec.idioms_per_polarity),
            target_idioms_negative: words("mist", spec.idioms_per_polarity),
            target_fillers: words("wort", spec.fillers),
            positive_emojis: vec!["😀".into(), "😍".into()],
            negative_emojis: vec!["😢".into(), "😡".into()],
            seen: ((n as f64 * spec.seen_fraction).round() as usize).clamp(1, n),
        }
    }

    /// `source TAB target` pairs; idioms have no entry.
    pub fn dictionary(&self) -> Vec<(String, String)> {
        [
            (&self.source_positive, &self.target_positive),
            (&self.source_negative, &self.target_negative),
            (&self.source_fillers, &self.target_fillers),
        ]
        .iter()
        .flat_map(|(s, t)| s.iter().cloned().zip(t.iter().cloned()))
        .collect()
    }
}

/// Base-26 lowercase suffix: a, b, …, z, ba, bb, …
fn letters(mut i: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (i % 26) as u8);
        i /= 26;
        if i == 0 {
            break;
        }
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

struct LanguageWords<'a> {
    positive: Vec<&'a str>,
    negative: Vec<&'a str>,
    idioms_positive: Vec<&'a str>,
    idioms_negative: Vec<&'a str>,
    fillers: &'a [String],
}

impl<'a> LanguageWords<'a> {
    fn sentiment_word(&self, positive: bool, rng: &mut Prng) -> &'a str {
        let (plain, idioms) = if positive {
            (&self.positive, &self.idioms_positive)
        } else {
            (&self.negative, &self.idioms_negative)
        };
        let k = rng.below(plain.len() + idioms.len());
        if k < plain.len() {
            plain[k]
        } else {
            idioms[k - plain.len()]
        }
    }

    fn filler(&self, rng: &mut Prng) -> &'a str {
        rng.choose(self.fillers).as_str()
    }
}

fn tweets(words: &LanguageWords, lex: &Lexicon, spec: &FixtureSpec, rng: &mut Prng) -> Vec<String> {
    let mut out = Vec::with_capacity(spec.tweets_per_language);
    for _ in 0..spec.tweets_per_language {
        let positive = rng.bernoulli(0.5);
        let mut toks: Vec<String> = (0..2 + rng.below(4)).map(|_| words.filler(rng).to_string()).collect();
        for _ in 0..1 + rng.below(2) {
            let at = rng.below(toks.len() + 1);
            toks.insert(at, words.sentiment_word(positive, rng).to_string());
        }
        if rng.bernoulli(0.05) {
            toks.insert(0, "@friend".into());
        }
        if rng.bernoulli(0.05) {
            let at = rng.below(toks.len() + 1);
            toks.insert(at, (10 + rng.below(90)).to_string());
        }
        if rng.bernoulli(0.9) {
            let flip = rng.bernoulli(spec.emoji_noise);
            let set = if positive != flip {
                &lex.positive_emojis
            } else {
                &lex.negative_emojis
            };
            toks.push(rng.choose(set).clone());
            if rng.bernoulli(0.1) {
                toks.push(rng.choose(set).clone());
            }
        }
        let mut text = toks.join(" ");
        let roll = rng.next_f64();
        if roll < 0.03 {
            text = format!("RT @friend: {text}");
        } else if roll < 0.06 {
            text = format!("{text} https://t.co/x{}", rng.below(1000));
        }
        out.push(text);
    }
    out
}

fn sentence(words: &[&str]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        s = first.to_uppercase() + &s[1..];
    }
    s.push('.');
    s
}

fn document(
    words: &LanguageWords,
    positive: bool,
    idioms_only: bool,
    rng: &mut Prng,
) -> String {
    let n_sent = 2 + rng.below(3);
    let signal = rng.below(n_sent);
    let mut sentences = Vec::with_capacity(n_sent);
    for k in 0..n_sent {
        let mut toks: Vec<&str> = (0..3 + rng.below(3)).map(|_| words.filler(rng)).collect();
        if k == signal || rng.bernoulli(0.25) {
            for _ in 0..1 + rng.below(2) {
                let w = if idioms_only {
                    let pool = if positive { &words.idioms_positive } else { &words.idioms_negative };
                    *rng.choose(pool)
                } else {
                    words.sentiment_word(positive, rng)
                };
                let at = rng.below(toks.len() + 1);
                toks.insert(at, w);
            }
        }
        sentences.push(sentence(&toks));
    }
    sentences.join(" ")
}

/// The generated corpus, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureData {
    pub lexicon: Lexicon,
    pub source_tweets: Vec<String>,
    pub target_tweets: Vec<String>,
    pub labeled_source: Vec<LabeledRecord>,
    pub test_target: Vec<LabeledRecord>,
}

pub fn generate_fixture(spec: &FixtureSpec) -> FixtureData {
    let lex = Lexicon::new(spec);
    let mut rng = Prng::new(spec.seed);
    let src_all = LanguageWords {
        positive: lex.source_positive.iter().map(String::as_str).collect(),
        negative: lex.source_negative.iter().map(String::as_str).collect(),
        idioms_positive: Vec::new(),
        idioms_negative: Vec::new(),
        fillers: &lex.source_fillers,
    };
    let tgt_all = LanguageWords {
        positive: lex.target_positive.iter().map(String::as_str).collect(),
        negative: lex.target_negative.iter().map(String::as_str).collect(),
        idioms_positive: lex.target_idioms_positive.iter().map(String::as_str).collect(),
        idioms_negative: lex.target_idioms_negative.iter().map(String::as_str).collect(),
        fillers: &lex.target_fillers,
    };
    let src_seen = LanguageWords {
        positive: src_all.positive[..lex.seen].to_vec(),
        negative: src_all.negative[..lex.seen].to_vec(),
        idioms_positive: Vec::new(),
        idioms_negative: Vec::new(),
        fillers: &lex.source_fillers,
    };
    let source_tweets = tweets(&src_all, &lex, spec, &mut rng);
    let target_tweets = tweets(&tgt_all, &lex, spec, &mut rng);
    let labeled_source = (0..spec.labeled_source)
        .map(|i| {
            let label = i % 2;
            LabeledRecord {
                id: Some(format!("src-{i:04}")),
                text: document(&src_seen, label == 1, false, &mut rng),
                label,
                language: "en".into(),
            }
        })
        .collect();
    let test_target = (0..spec.test_target)
        .map(|i| {
            let label = i % 2;
            let idioms_only = !tgt_all.idioms_positive.is_empty() && rng.bernoulli(spec.idiom_documents);
            LabeledRecord {
                id: Some(format!("tgt-{i:04}")),
                text: document(&tgt_all, label == 1, idioms_only, &mut rng),
                label,
                language: "de".into(),
            }
        })
        .collect();
    FixtureData {
        lexicon: lex,
        source_tweets,
        target_tweets,
        labeled_source,
        test_target,
    }
}

/// Desk-scale hyperparameters sized for the fixture.
pub fn fixture_config() -> PipelineConfig {
    let json = serde_json::json!({
        "source_language": "en",
        "target_language": "de",
        "paths": {
            "source_tweets": "source_tweets.txt",
            "target_tweets": "target_tweets.txt",
            "labeled_source": "labeled_source.jsonl",
            "test_target": "test_target.jsonl",
            "dictionary": "dictionary.tsv"
        }
    });
    let mut cfg = PipelineConfig::from_json(&json.to_string(), ".").expect("fixture config parses");
    cfg.precision = Precision::F64;
    cfg.min_count = 1;
    cfg.skipgram = SkipGramConfig {
        dim: 16,
        epochs: 3,
        ..SkipGramConfig::default()
    };
    cfg.encoder = EncoderConfig {
        hidden: 8,
        epochs: 15,
        batch_size: 32,
        adam: AdamConfig {
            lr: 3e-3,
            ..AdamConfig::default()
        },
        ..EncoderConfig::default()
    };
    cfg.classifier = ClassifierConfig {
        epochs: 40,
        batch_size: 16,
        adam: AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        },
        ..ClassifierConfig::default()
    };
    cfg
}

/// Writes the corpus files and a `config.json` into `dir`.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<(PathBuf, FixtureData)> {
    let data = generate_fixture(spec);
    let lines = |xs: &[String]| xs.iter().map(|s| format!("{s}\n")).collect::<String>();
    write_file(&dir.join("source_tweets.txt"), lines(&data.source_tweets).as_bytes())?;
    write_file(&dir.join("target_tweets.txt"), lines(&data.target_tweets).as_bytes())?;
    let jsonl = |recs: &[LabeledRecord]| -> Result<Vec<u8>> {
        let mut out = Vec::new();
        crate::textprep::write_labeled_jsonl(&mut out, recs).map_err(|e| crate::ElsaError::io(dir, e))?;
        Ok(out)
    };
    write_file(&dir.join("labeled_source.jsonl"), &jsonl(&data.labeled_source)?)?;
    write_file(&dir.join("test_target.jsonl"), &jsonl(&data.test_target)?)?;
    let dict: String = data
        .lexicon
        .dictionary()
        .iter()
        .map(|(s, t)| format!("{s}\t{t}\n"))
        .collect();
    write_file(&dir.join("dictionary.tsv"), dict.as_bytes())?;

    let mut cfg = fixture_config();
    cfg.inspect_words = data
        .lexicon
        .source_positive
        .iter()
        .chain(&data.lexicon.source_negative)
        .cloned()
        .collect();
    let mut text = serde_json::to_string_pretty(&cfg)?;
    text.push('\n');
    let path = dir.join("config.json");
    write_file(&path, text.as_bytes())?;
    write_file(
        &dir.join("lexicon.json"),
        serde_json::to_string_pretty(&data.lexicon)?.as_bytes(),
    )?;
    Ok((path, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letters_are_distinct() {
        assert_eq!(letters(0), "a");
        assert_eq!(letters(25), "z");
        assert_eq!(letters(26), "ba");
    }

    #[test]
    fn generation_is_deterministic_and_sized() {
        let spec = FixtureSpec {
            tweets_per_language: 50,
            labeled_source: 20,
            test_target: 10,
            ..Default::default()
        };
        let a = generate_fixture(&spec);
        assert_eq!(a, generate_fixture(&spec));
        assert_eq!(a.source_tweets.len(), 50);
        assert_eq!(a.labeled_source.len(), 20);
        assert_eq!(a.test_target.iter().filter(|r| r.label == 1).count(), 5);
    }

    #[test]
    fn idioms_are_untranslatable_and_labeled_docs_use_seen_words() {
        let data = generate_fixture(&FixtureSpec::default());
        let lex = &data.lexicon;
        let dict = lex.dictionary();
        let n_sent = lex.target_positive.len() + lex.target_idioms_positive.len();
        assert_eq!(lex.target_idioms_positive.len() as f64 / n_sent as f64, 0.2);
        assert!(dict.iter().all(|(_, t)| !t.starts_with("klasse") && !t.starts_with("mist")));
        let unseen = &lex.source_positive[lex.seen..];
        assert!(data
            .labeled_source
            .iter()
            .all(|r| unseen.iter().all(|w| !r.text.split([' ', '.']).any(|t| t.eq_ignore_ascii_case(w)))));
    }
}
