use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::docsent::ClassifierConfig;
use crate::embed::SkipGramConfig;
use crate::encoder::EncoderConfig;
use crate::error::{ElsaError, Result};
use crate::numcore::Prng;
use crate::textprep::{Language, DEFAULT_EMOJI_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Input files. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPaths {
    /// One tweet per line, source language.
    pub source_tweets: PathBuf,
    pub target_tweets: PathBuf,
    /// Emoji-bearing tweets for encoder training; the tweet files when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_emoji_tweets: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_emoji_tweets: Option<PathBuf>,
    /// Labeled source-language documents, JSON lines.
    pub labeled_source: PathBuf,
    /// Labeled target-language documents for evaluation, JSON lines.
    pub test_target: PathBuf,
    /// `source TAB target` word pairs.
    pub dictionary: PathBuf,
    /// `target TAB source` word pairs; the inverse of `dictionary` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary_reverse: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub source_language: Language,
    pub target_language: Language,
    pub paths: DataPaths,
    /// Output directory. Not part of the config hash.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default = "default_emoji_classes")]
    pub emoji_classes: usize,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    /// Train/validation/test ratios for emoji examples.
    #[serde(default = "default_split")]
    pub emoji_split: [u32; 3],
    #[serde(default = "default_classes")]
    pub classes: usize,
    /// Fraction of tweets kept before any training.
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    /// Derive emoji vocabularies from the full tweet files even when
    /// `fraction < 1`.
    #[serde(default)]
    pub reuse_emoji_vocab: bool,
    #[serde(default)]
    pub skipgram: SkipGramConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    /// Source-language words for the similarity/merge-tree export.
    #[serde(default)]
    pub inspect_words: Vec<String>,
    /// Number of target test documents in the attention export.
    #[serde(default = "default_attention_docs")]
    pub attention_docs: usize,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_seed() -> u64 {
    1
}
fn default_emoji_classes() -> usize {
    DEFAULT_EMOJI_CLASSES
}
fn default_min_count() -> usize {
    5
}
fn default_split() -> [u32; 3] {
    [7, 2, 1]
}
fn default_classes() -> usize {
    2
}
fn default_fraction() -> f64 {
    1.0
}
fn default_attention_docs() -> usize {
    5
}

/// Seed streams handed to individual stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    Subsample = 1,
    SplitSource,
    SplitTarget,
    SkipGramSource,
    SkipGramTarget,
    EncoderSource,
    EncoderTarget,
    Classifier,
}

impl PipelineConfig {
    pub fn from_json(json: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: PipelineConfig =
            serde_json::from_str(json).map_err(|e| ElsaError::Config(format!("config: {e}")))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ElsaError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn set_base_dir(&mut self, dir: impl Into<PathBuf>) {
        self.base_dir = dir.into();
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_language == self.target_language {
            return Err(ElsaError::Config("source and target languages must differ".into()));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(ElsaError::Config(format!("fraction {} outside (0, 1]", self.fraction)));
        }
        if self.emoji_classes == 0 || self.classes < 2 || self.min_count == 0 {
            return Err(ElsaError::Config(
                "emoji_classes ≥ 1, classes ≥ 2 and min_count ≥ 1 required".into(),
            ));
        }
        if self.emoji_split.contains(&0) {
            return Err(ElsaError::Config("emoji_split ratios must be positive".into()));
        }
        self.skipgram.validate()?;
        self.encoder.validate()?;
        self.classifier.validate()?;
        let p = &self.paths;
        let mut required = vec![
            &p.source_tweets,
            &p.target_tweets,
            &p.labeled_source,
            &p.test_target,
            &p.dictionary,
        ];
        required.extend(p.source_emoji_tweets.iter());
        required.extend(p.target_emoji_tweets.iter());
        required.extend(p.dictionary_reverse.iter());
        for path in required {
            let full = self.resolve(path);
            if !full.is_file() {
                return Err(ElsaError::Config(format!("input file {} does not exist", full.display())));
            }
        }
        Ok(())
    }

    /// The config as recorded in artifacts: everything except `out`.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("out");
        }
        v
    }

    /// SHA-256 of the snapshot's canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.snapshot()).expect("snapshot serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn stage_seed(&self, stream: SeedStream) -> u64 {
        Prng::derive(self.seed, stream as u64).next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "source_language": "en",
        "target_language": "de",
        "paths": {
            "source_tweets": "a.txt", "target_tweets": "b.txt",
            "labeled_source": "c.jsonl", "test_target": "d.jsonl",
            "dictionary": "e.tsv"
        }
    }"#;

    #[test]
    fn defaults_and_hash_ignore_out() {
        let a = PipelineConfig::from_json(MINIMAL, "/tmp").unwrap();
        assert_eq!(a.emoji_split, [7, 2, 1]);
        assert_eq!(a.encoder.batch_size, 250);
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn missing_inputs_and_bad_values_are_config_errors() {
        let a = PipelineConfig::from_json(MINIMAL, "/nonexistent").unwrap();
        assert!(matches!(a.validate(), Err(ElsaError::Config(_))));
        assert!(matches!(
            PipelineConfig::from_json("{", "."),
            Err(ElsaError::Config(_))
        ));
        let mut b = a.clone();
        b.fraction = 0.0;
        assert!(matches!(b.validate(), Err(ElsaError::Config(_))));
    }

    #[test]
    fn stage_seeds_differ_and_are_stable() {
        let a = PipelineConfig::from_json(MINIMAL, ".").unwrap();
        assert_ne!(a.stage_seed(SeedStream::EncoderSource), a.stage_seed(SeedStream::EncoderTarget));
        assert_eq!(a.stage_seed(SeedStream::Classifier), a.clone().stage_seed(SeedStream::Classifier));
    }
}
