use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::docsent::{
    classify, read_dictionary_tsv, train_classifier, AblationComponents, Bridge, ClassifierSide,
    ClassifierTrainingReport, DictionaryTranslator, Encoders, SentimentClassifierParams, Side, Variant,
    WordAttentionEncoder,
};
use crate::embed::{train_skipgram, EmbeddingTable};
use crate::encoder::{evaluate_emoji, train_encoder, EncoderDims, EncoderParams, EncoderTrainingReport};
use crate::error::{ElsaError, Result};
use crate::numcore::{ParamSet, ParamTensor, Prng, Scalar};
use crate::pipeline::checkpoint::{write_file, Artifact, Checkpoint, FORMAT_VERSION};
use crate::pipeline::config::{PipelineConfig, Precision, SeedStream};
use crate::pipeline::eval::{evaluate, mcnemar, subsample, EvalReport, McNemar};
use crate::pipeline::inspect::{export_attention, inspect_words, DocumentAttention, WordInspection};
use crate::textprep::{
    build_vocab, extract_emoji_examples, filter_tweet, prepare_text, read_labeled_jsonl, split_dataset,
    DefaultSegmenter, EmojiExample, EmojiVocabulary, LabeledDocument, LabeledRecord, Language, RawText,
    TokenSequence, Vocabulary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Preprocess,
    TrainEmbeddings,
    TrainEncoder,
    TrainClassifier,
    Predict,
    Evaluate,
    Ablate,
    Inspect,
}

impl Stage {
    /// The main chain, in dependency order.
    pub const CHAIN: [Stage; 6] = [
        Stage::Preprocess,
        Stage::TrainEmbeddings,
        Stage::TrainEncoder,
        Stage::TrainClassifier,
        Stage::Predict,
        Stage::Evaluate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::TrainEmbeddings => "train-embeddings",
            Stage::TrainEncoder => "train-encoder",
            Stage::TrainClassifier => "train-classifier",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::Ablate => "ablate",
            Stage::Inspect => "inspect",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = ElsaError;

    fn from_str(s: &str) -> Result<Self> {
        [
            Stage::Preprocess,
            Stage::TrainEmbeddings,
            Stage::TrainEncoder,
            Stage::TrainClassifier,
            Stage::Predict,
            Stage::Evaluate,
            Stage::Ablate,
            Stage::Inspect,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
        .ok_or_else(|| ElsaError::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Classifier variant for train-classifier, predict and evaluate
    /// (default FULL), or the single variant to run in ablate (default all).
    pub variant: Option<Variant>,
    /// Let evaluate proceed despite config-hash mismatches.
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

/// Artifact locations under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn tweets(&self, side: Side) -> PathBuf {
        self.root.join(format!("preprocess/{}_tweets.json", side.as_str()))
    }
    pub fn emoji_vocab(&self, side: Side) -> PathBuf {
        self.root.join(format!("preprocess/{}_emoji_vocab.json", side.as_str()))
    }
    pub fn emoji_examples(&self, side: Side) -> PathBuf {
        self.root.join(format!("preprocess/{}_emoji_examples.json", side.as_str()))
    }
    pub fn labeled_source(&self) -> PathBuf {
        self.root.join("preprocess/labeled_source.json")
    }
    pub fn test_target(&self) -> PathBuf {
        self.root.join("preprocess/test_target.json")
    }
    pub fn preprocess_summary(&self) -> PathBuf {
        self.root.join("preprocess/summary.json")
    }
    pub fn embeddings(&self, side: Side) -> PathBuf {
        self.root.join(format!("embeddings/{}.ckpt", side.as_str()))
    }
    pub fn embeddings_tsv(&self, side: Side) -> PathBuf {
        self.root.join(format!("embeddings/{}.tsv", side.as_str()))
    }
    pub fn embeddings_report(&self, side: Side) -> PathBuf {
        self.root.join(format!("embeddings/{}_report.json", side.as_str()))
    }
    pub fn encoder(&self, side: Side) -> PathBuf {
        self.root.join(format!("encoder/{}.ckpt", side.as_str()))
    }
    pub fn encoder_report(&self, side: Side) -> PathBuf {
        self.root.join(format!("encoder/{}_report.json", side.as_str()))
    }
    pub fn classifier(&self, v: Variant) -> PathBuf {
        self.root.join(format!("classifier/{v}.ckpt"))
    }
    pub fn classifier_report(&self, v: Variant) -> PathBuf {
        self.root.join(format!("classifier/{v}_report.json"))
    }
    pub fn predictions(&self, v: Variant) -> PathBuf {
        self.root.join(format!("predictions/{v}.jsonl"))
    }
    pub fn eval(&self, v: Variant) -> PathBuf {
        self.root.join(format!("eval/{v}.json"))
    }
    pub fn ablation(&self) -> PathBuf {
        self.root.join("eval/ablation.json")
    }
    pub fn inspect_words(&self) -> PathBuf {
        self.root.join("inspect/words.json")
    }
    pub fn attention(&self) -> PathBuf {
        self.root.join("inspect/attention.json")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmojiSplits {
    pub train: Vec<EmojiExample>,
    pub valid: Vec<EmojiExample>,
    pub test: Vec<EmojiExample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub raw_tweets: [usize; 2],
    pub kept_tweets: [usize; 2],
    pub sampled_tweets: [usize; 2],
    pub emoji_classes: [usize; 2],
    pub emoji_examples: [usize; 2],
    pub labeled_source: usize,
    pub test_target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub side: Side,
    pub language: Language,
    pub vocab: Vocabulary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderMeta {
    pub side: Side,
    pub language: Language,
    pub vocab: Vocabulary,
    pub emojis: Vec<String>,
    pub max_len: usize,
    pub dropout: f64,
    pub embed_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderReport {
    pub training: EncoderTrainingReport,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordEncoderMeta {
    pub vocab: Vocabulary,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideMeta {
    pub side: Side,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_encoder: Option<WordEncoderMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMeta {
    pub variant: Variant,
    pub classes: usize,
    pub sides: Vec<SideMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionHeader {
    pub module: String,
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub predicted: usize,
    pub probabilities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub accuracy: f64,
    /// FULL against this variant; absent for FULL itself or when FULL
    /// predictions are unavailable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcnemar_vs_full: Option<McNemar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordsExport {
    pub raw: WordInspection,
    pub fine_tuned: WordInspection,
}

fn require(path: &Path, stage: Stage) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(ElsaError::Dependency {
            stage: stage.as_str().to_string(),
            path: path.to_path_buf(),
        })
    }
}

fn sides() -> [Side; 2] {
    [Side::Source, Side::Target]
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Source => 0,
        Side::Target => 1,
    }
}

/// Runs one stage. Every stage reads its inputs from files and writes its
/// outputs under `config.out`.
pub fn run_stage(stage: Stage, config: &PipelineConfig, opts: &RunOptions) -> Result<StageOutcome> {
    config.validate()?;
    match config.precision {
        Precision::F32 => Runner::<f32>::new(config).run(stage, opts),
        Precision::F64 => Runner::<f64>::new(config).run(stage, opts),
    }
}

/// Runs the main chain, preprocess through evaluate.
pub fn run_all(config: &PipelineConfig, opts: &RunOptions) -> Result<Vec<StageOutcome>> {
    Stage::CHAIN.iter().map(|&s| run_stage(s, config, opts)).collect()
}

struct Runner<'a, T> {
    cfg: &'a PipelineConfig,
    layout: Layout,
    hash: String,
    _scalar: std::marker::PhantomData<T>,
}

impl<'a, T: Scalar> Runner<'a, T> {
    fn new(cfg: &'a PipelineConfig) -> Self {
        Runner {
            cfg,
            layout: Layout::new(cfg.out_dir()),
            hash: cfg.hash(),
            _scalar: std::marker::PhantomData,
        }
    }

    fn run(&self, stage: Stage, opts: &RunOptions) -> Result<StageOutcome> {
        log::info!("stage {stage}");
        let variant = opts.variant.unwrap_or(Variant::Full);
        let (outputs, summary) = match stage {
            Stage::Preprocess => self.preprocess()?,
            Stage::TrainEmbeddings => self.train_embeddings()?,
            Stage::TrainEncoder => self.train_encoders()?,
            Stage::TrainClassifier => self.train_classifier(variant)?,
            Stage::Predict => self.predict(variant)?,
            Stage::Evaluate => self.evaluate(variant, opts.force)?,
            Stage::Ablate => self.ablate(opts)?,
            Stage::Inspect => self.inspect()?,
        };
        Ok(StageOutcome {
            stage,
            outputs,
            summary,
        })
    }

    fn artifact<D: Serialize + for<'de> Deserialize<'de>>(&self, module: &str, seed: u64, data: D) -> Artifact<D> {
        Artifact::new(module, self.hash.clone(), seed, data)
    }

    fn language(&self, side: Side) -> &Language {
        match side {
            Side::Source => &self.cfg.source_language,
            Side::Target => &self.cfg.target_language,
        }
    }

    fn read_tweets(&self, path: &Path, side: Side) -> Result<(usize, Vec<TokenSequence>)> {
        let full = self.cfg.resolve(path);
        let file = File::open(&full).map_err(|e| ElsaError::io(&full, e))?;
        let mut raw = 0usize;
        let mut kept = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| ElsaError::io(&full, e))?;
            if line.trim().is_empty() {
                continue;
            }
            raw += 1;
            let text = RawText {
                text: line,
                language: self.language(side).clone(),
            };
            if !filter_tweet(&text) {
                continue;
            }
            let tokens = prepare_text(&text.text, &DefaultSegmenter);
            if !tokens.is_empty() {
                kept.push(tokens);
            }
        }
        Ok((raw, kept))
    }

    fn read_documents(&self, path: &Path, expect: &Language) -> Result<Vec<LabeledRecord>> {
        let full = self.cfg.resolve(path);
        let file = File::open(&full).map_err(|e| ElsaError::io(&full, e))?;
        let docs = read_labeled_jsonl(BufReader::new(file), self.cfg.classes, &DefaultSegmenter)?;
        if docs.is_empty() {
            return Err(ElsaError::Data(format!("{} has no documents", full.display())));
        }
        docs.into_iter()
            .map(|d| {
                if &d.language != expect {
                    return Err(ElsaError::Data(format!(
                        "{}: document {} is in {}, expected {expect}",
                        full.display(),
                        d.id,
                        d.language
                    )));
                }
                Ok(LabeledRecord {
                    id: Some(d.id),
                    text: d.raw,
                    label: d.label,
                    language: d.language.to_string(),
                })
            })
            .collect()
    }

    fn preprocess(&self) -> Result<(Vec<PathBuf>, serde_json::Value)> {
        let paths = &self.cfg.paths;
        let sample_seed = self.cfg.stage_seed(SeedStream::Subsample);
        let mut outputs = Vec::new();
        let mut summary = PreprocessSummary {
            raw_tweets: [0; 2],
            kept_tweets: [0; 2],
            sampled_tweets: [0; 2],
            emoji_classes: [0; 2],
            emoji_examples: [0; 2],
            labeled_source: 0,
            test_target: 0,
        };
        for side in sides() {
            let k = side_index(side);
            let (tweet_path, emoji_path, split_stream) = match side {
                Side::Source => (&paths.source_tweets, &paths.source_emoji_tweets, SeedStream::SplitSource),
                Side::Target => (&paths.target_tweets, &paths.target_emoji_tweets, SeedStream::SplitTarget),
            };
            let side_seed = Prng::derive(sample_seed, k as u64).next_u64();
            let (raw, kept) = self.read_tweets(tweet_path, side)?;
            if kept.is_empty() {
                return Err(ElsaError::Data(format!("no usable {} tweets", side.as_str())));
            }
            let sampled = subsample(&kept, self.cfg.fraction, side_seed)?;
            summary.raw_tweets[k] = raw;
            summary.kept_tweets[k] = kept.len();
            summary.sampled_tweets[k] = sampled.len();

            let (emoji_full, emoji_sampled) = match emoji_path {
                Some(p) => {
                    let (_, full) = self.read_tweets(p, side)?;
                    if full.is_empty() {
                        return Err(ElsaError::Data(format!("no usable {} emoji tweets", side.as_str())));
                    }
                    let s = subsample(&full, self.cfg.fraction, side_seed)?;
                    (full, s)
                }
                None => (kept.clone(), sampled.clone()),
            };
            let vocab_source = if self.cfg.reuse_emoji_vocab { &emoji_full } else { &emoji_sampled };
            let emojis = EmojiVocabulary::build(self.language(side).clone(), vocab_source, self.cfg.emoji_classes)
                .map_err(|e| ElsaError::Data(format!("{} emoji vocabulary: {e}", side.as_str())))?;
            let examples: Vec<EmojiExample> = emoji_sampled
                .iter()
                .flat_map(|t| extract_emoji_examples(t, &emojis))
                .collect();
            let ratios = self.cfg.emoji_split;
            if examples.len() < ratios.len() {
                return Err(ElsaError::Data(format!(
                    "only {} {} emoji examples",
                    examples.len(),
                    side.as_str()
                )));
            }
            let mut parts = split_dataset(&examples, &ratios, self.cfg.stage_seed(split_stream))?.into_iter();
            let splits = EmojiSplits {
                train: parts.next().unwrap_or_default(),
                valid: parts.next().unwrap_or_default(),
                test: parts.next().unwrap_or_default(),
            };
            summary.emoji_classes[k] = emojis.len();
            summary.emoji_examples[k] = examples.len();

            let p = self.layout.tweets(side);
            self.artifact("preprocess", side_seed, sampled).save(&p)?;
            outputs.push(p);
            let p = self.layout.emoji_vocab(side);
            self.artifact("preprocess", side_seed, emojis.entries().to_vec()).save(&p)?;
            outputs.push(p);
            let p = self.layout.emoji_examples(side);
            self.artifact("preprocess", self.cfg.stage_seed(split_stream), splits).save(&p)?;
            outputs.push(p);
        }
        let labeled = self.read_documents(&paths.labeled_source, &self.cfg.source_language)?;
        let test = self.read_documents(&paths.test_target, &self.cfg.target_language)?;
        summary.labeled_source = labeled.len();
        summary.test_target = test.len();
        for (p, recs) in [(self.layout.labeled_source(), labeled), (self.layout.test_target(), test)] {
            self.artifact("preprocess", self.cfg.seed, recs).save(&p)?;
            outputs.push(p);
        }
        let p = self.layout.preprocess_summary();
        self.artifact("preprocess", self.cfg.seed, summary.clone()).save(&p)?;
        outputs.push(p);
        Ok((outputs, serde_json::to_value(summary)?))
    }

    fn train_embeddings(&self) -> Result<(Vec<PathBuf>, serde_json::Value)> {
        let mut outputs = Vec::new();
        let mut summary = serde_json::Map::new();
        for side in sides() {
            let src = self.layout.tweets(side);
            require(&src, Stage::Preprocess)?;
            let tweets: Artifact<Vec<TokenSequence>> = Artifact::load(&src)?;
            let vocab = build_vocab(tweets.data.iter(), self.cfg.min_count)?;
            let stream = match side {
                Side::Source => SeedStream::SkipGramSource,
                Side::Target => SeedStream::SkipGramTarget,
            };
            let mut sg = self.cfg.skipgram.clone();
            sg.seed = self.cfg.stage_seed(stream);
            let (table, report) = train_skipgram::<T, _>(tweets.data.iter(), &vocab, &sg)?;
            let meta = EmbeddingMeta {
                side,
                language: self.language(side).clone(),
                vocab,
            };
            let mut ck = Checkpoint::new("embeddings", self.hash.clone(), sg.seed, self.cfg.snapshot(), serde_json::to_value(&meta)?);
            ck.push("embedding", table.vectors.clone());
            let p = self.layout.embeddings(side);
            ck.save(&p)?;
            outputs.push(p);
            let p = self.layout.embeddings_tsv(side);
            write_file(&p, table.to_tsv().as_bytes())?;
            outputs.push(p);
            let p = self.layout.embeddings_report(side);
            let data = serde_json::json!({
                "epoch_losses": report.epoch_losses,
                "pairs_per_epoch": report.pairs_per_epoch,
                "vocab_size": table.vocab.len(),
            });
            self.artifact("embeddings", sg.seed, data.clone()).save(&p)?;
            outputs.push(p);
            summary.insert(side.as_str().into(), data);
        }
        Ok((outputs, serde_json::Value::Object(summary)))
    }

    fn train_encoders(&self) -> Result<(Vec<PathBuf>, serde_json::Value)> {
        let mut outputs = Vec::new();
        let mut summary = serde_json::Map::new();
        for side in sides() {
            for p in [self.layout.emoji_vocab(side), self.layout.emoji_examples(side)] {
                require(&p, Stage::Preprocess)?;
            }
            let table = self.load_embeddings(side)?;
            let vocab: Artifact<Vec<String>> = Artifact::load(&self.layout.emoji_vocab(side))?;
            let emojis = EmojiVocabulary::from_entries(self.language(side).clone(), vocab.data)?;
            let splits: Artifact<EmojiSplits> = Artifact::load(&self.layout.emoji_examples(side))?;
            let stream = match side {
                Side::Source => SeedStream::EncoderSource,
                Side::Target => SeedStream::EncoderTarget,
            };
            let mut ec = self.cfg.encoder.clone();
            ec.seed = self.cfg.stage_seed(stream);
            let (params, training) = train_encoder(&splits.data.train, &splits.data.valid, &ec, &table, &emojis)?;
            let test: Vec<(Vec<usize>, usize)> = splits
                .data
                .test
                .iter()
                .map(|e| Ok((params.token_ids(&e.tokens)?, e.emoji_class)))
                .collect::<Result<_>>()?;
            let (test_loss, test_accuracy) = if test.is_empty() { (f64::NAN, f64::NAN) } else { evaluate_emoji(&params, &test)? };
            self.save_encoder(side, &params, ec.seed)?;
            outputs.push(self.layout.encoder(side));
            let report = EncoderReport {
                training,
                test_loss,
                test_accuracy,
                test_size: test.len(),
            };
            let p = self.layout.encoder_report(side);
            self.artifact("encoder", ec.seed, report.clone()).save(&p)?;
            outputs.push(p);
            summary.insert(
                side.as_str().into(),
                serde_json::json!({
                    "best_epoch": report.training.best_epoch,
                    "epochs_run": report.training.valid_loss.len(),
                    "test_accuracy": test_accuracy,
                }),
            );
        }
        Ok((outputs, serde_json::Value::Object(summary)))
    }

    fn save_encoder(&self, side: Side, params: &EncoderParams<T>, seed: u64) -> Result<()> {
        let dims = params.dims();
        let meta = EncoderMeta {
            side,
            language: self.language(side).clone(),
            vocab: params.vocab.clone(),
            emojis: params.emojis.clone(),
            max_len: params.max_len,
            dropout: params.dropout,
            embed_dim: dims.embed_dim,
            hidden1: dims.hidden1,
            hidden2: dims.hidden2,
        };
        let mut ck = Checkpoint::new("encoder", self.hash.clone(), seed, self.cfg.snapshot(), serde_json::to_value(meta)?);
        ck.push_params(params);
        ck.save(&self.layout.encoder(side))
    }

    fn load_embeddings(&self, side: Side) -> Result<EmbeddingTable<T>> {
        let p = self.layout.embeddings(side);
        require(&p, Stage::TrainEmbeddings)?;
        load_embeddings(&p)
    }

    fn load_encoder(&self, side: Side) -> Result<EncoderParams<T>> {
        let p = self.layout.encoder(side);
        require(&p, Stage::TrainEncoder)?;
        load_encoder(&p)
    }

    fn dictionary(&self) -> Result<DictionaryTranslator> {
        let (src, tgt) = (&self.cfg.source_language, &self.cfg.target_language);
        let read = |p: &Path| -> Result<Vec<(String, String)>> {
            let full = self.cfg.resolve(p);
            let f = File::open(&full).map_err(|e| ElsaError::io(&full, e))?;
            read_dictionary_tsv(BufReader::new(f))
        };
        let mut d = DictionaryTranslator::new();
        d.insert_direction(src.clone(), tgt.clone(), read(&self.cfg.paths.dictionary)?)?;
        match &self.cfg.paths.dictionary_reverse {
            Some(p) => d.insert_direction(tgt.clone(), src.clone(), read(p)?)?,
            None => d.insert_inverse(src, tgt)?,
        }
        Ok(d)
    }

    fn load_documents(&self, path: &Path) -> Result<Vec<LabeledDocument>> {
        require(path, Stage::Preprocess)?;
        let recs: Artifact<Vec<LabeledRecord>> = Artifact::load(path)?;
        recs.data
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                LabeledDocument::from_text(
                    r.id.unwrap_or_else(|| i.to_string()),
                    r.text,
                    r.label,
                    Language::new(r.language),
                    &DefaultSegmenter,
                )
            })
            .collect()
    }

    fn encoders_for(&self, variant: Variant) -> Result<(Option<EncoderParams<T>>, Option<EncoderParams<T>>)> {
        if variant == Variant::N {
            return Ok((None, None));
        }
        let wants = |s: Side| variant.sides().contains(&s);
        let source = if wants(Side::Source) { Some(self.load_encoder(Side::Source)?) } else { None };
        let target = if wants(Side::Target) { Some(self.load_encoder(Side::Target)?) } else { None };
        Ok((source, target))
    }

    fn train_classifier(&self, variant: Variant) -> Result<(Vec<PathBuf>, serde_json::Value)> {
        let docs = self.load_documents(&self.layout.labeled_source())?;
        let (enc_s, enc_t) = self.encoders_for(variant)?;
        let (emb_s, emb_t) = if variant == Variant::N {
            (Some(self.load_embeddings(Side::Source)?), Some(self.load_embeddings(Side::Target)?))
        } else {
            (None, None)
        };
        let dict = self.dictionary()?;
        let bridge = Bridge {
            oracle: &dict,
            source: &self.cfg.source_language,
            target: &self.cfg.target_language,
            segmenter: &DefaultSegmenter,
        };
        let components = AblationComponents {
            encoders: Encoders {
                source: enc_s.as_ref(),
                target: enc_t.as_ref(),
            },
            embeddings_source: emb_s.as_ref(),
            embeddings_target: emb_t.as_ref(),
        };
        let mut cc = self.cfg.classifier.clone();
        cc.seed = self.cfg.stage_seed(SeedStream::Classifier);
        let (params, report) = train_classifier(&docs, &bridge, &components, variant, self.cfg.classes, &cc)?;
        let meta = classifier_meta(&params);
        let mut ck = Checkpoint::new("classifier", self.hash.clone(), cc.seed, self.cfg.snapshot(), serde_json::to_value(meta)?);
        ck.push_params(&params);
        let p = self.layout.classifier(variant);
        ck.save(&p)?;
        let rp = self.layout.classifier_report(variant);
        self.artifact::<ClassifierTrainingReport>("classifier", cc.seed, report.clone()).save(&rp)?;
        Ok((
            vec![p, rp],
            serde_json::json!({
                "variant": variant,
                "best_epoch": report.best_epoch,
                "train_accuracy": report.train_accuracy,
                "valid_accuracy": report.valid_accuracy.get(report.best_epoch),
            }),
        ))
    }

    fn load_classifier(&self, variant: Variant) -> Result<(SentimentClassifierParams<T>, Checkpoint<T>)> {
        let p = self.layout.classifier(variant);
        require(&p, Stage::TrainClassifier)?;
        load_classifier(&p)
    }

    fn predict(&self, variant: Variant) -> Result<(Vec<PathBuf>, serde_json::Value)> {
        let (params, ck) = self.load_classifier(variant)?;
        let docs = self.load_documents(&self.layout.test_target())?;
        let (enc_s, enc_t) = self.encoders_for(variant)?;
        let encoders = Encoders {
            source: enc_s.as_ref(),
            target: enc_t.as_ref(),
        };
        let dict = self.dictionary()?;
        let bridge = Bridge {
            oracle: &dict,
            source: &self.cfg.source_language,
            target: &self.cfg.target_language,
            segmenter: &DefaultSegmenter,
        };
        let header = PredictionHeader {
            module: "predictions".into(),
            format_version: FORMAT_VERSION,
            config_hash: ck.config_hash.clone(),
            seed: ck.seed,
            variant,
        };
        let mut out = Vec::new();
        serde_json::to_writer(&mut out, &serde_json::json!({ "header": header }))?;
        out.push(b'\n');
        let mut correct = 0usize;
        for doc in &docs {
            let (predicted, probabilities) = classify(doc, &bridge, &encoders, &params)?;
            correct += usize::from(predicted == doc.label);
            serde_json::to_writer(
                &mut out,
                &Prediction {
                    doc_id: doc.id.clone(),
                    predicted,
                    probabilities,
                    gold: Some(doc.label),
                },
            )?;
            out.push(b'\n');
        }
        let p = self.layout.predictions(variant);
        write_file(&p, &out)?;
        Ok((
            vec![p],
            serde_json::json!({"variant": variant, "documents": docs.len(), "correct": correct}),
        ))
    }

    fn evaluate(&self, variant: Variant, force: bool) -> Result<(Vec<PathBuf>, serde_json::Value)> {
        let pp = self.layout.predictions(variant);
        require(&pp, Stage::Predict)?;
        let (header, preds) = read_predictions(&pp)?;
        let cp = self.layout.classifier(variant);
        require(&cp, Stage::TrainClassifier)?;
        let model_hash = Checkpoint::<T>::load(&cp)?.config_hash;
        let data_hash = Artifact::<serde_json::Value>::load(&self.layout.test_target())?.config_hash;
        let hashes = [&header.config_hash, &model_hash, &data_hash];
        if !force && hashes.iter().any(|h| **h != self.hash) {
            return Err(ElsaError::Config(format!(
                "config hash mismatch (current {}, predictions {}, model {}, data {}); rerun the stages or pass --force",
                self.hash, header.config_hash, model_hash, data_hash
            )));
        }
        let gold: Vec<usize> = preds
            .iter()
            .map(|p| p.gold.ok_or_else(|| ElsaError::Data(format!("prediction {} has no gold label", p.doc_id))))
            .collect::<Result<_>>()?;
        let predicted: Vec<usize> = preds.iter().map(|p| p.predicted).collect();
        let report = evaluate(&predicted, &gold, self.cfg.classes)?;
        let p = self.layout.eval(variant);
        self.artifact::<EvalReport>("evaluate", header.seed, report.clone()).save(&p)?;
        Ok((vec![p], serde_json::json!({"variant": variant, "accuracy": report.accuracy, "n": report.n})))
    }

    fn ablate(&self, opts: &RunOptions) -> Result<(Vec<PathBuf>, serde_json::Value)> {
        let variants: Vec<Variant> = match opts.variant {
            Some(v) => vec![v],
            None => Variant::ALL.to_vec(),
        };
        let mut outputs = Vec::new();
        for &v in &variants {
            outputs.extend(self.train_classifier(v)?.0);
            outputs.extend(self.predict(v)?.0);
            outputs.extend(self.evaluate(v, opts.force)?.0);
        }
        let full_preds = self.layout.predictions(Variant::Full);
        let full = if full_preds.is_file() { Some(read_predictions(&full_preds)?.1) } else { None };
        let mut rows = Vec::new();
        for v in Variant::ALL {
            let pp = self.layout.predictions(v);
            if !pp.is_file() {
                continue;
            }
            let preds = read_predictions(&pp)?.1;
            let gold: Vec<usize> = preds.iter().map(|p| p.gold.unwrap_or(usize::MAX)).collect();
            let predicted: Vec<usize> = preds.iter().map(|p| p.predicted).collect();
            let accuracy = predicted.iter().zip(&gold).filter(|(a, b)| a == b).count() as f64 / gold.len().max(1) as f64;
            let mcnemar_vs_full = match (&full, v) {
                (Some(f), v) if v != Variant::Full => {
                    let fp: Vec<usize> = f.iter().map(|p| p.predicted).collect();
                    Some(mcnemar(&fp, &predicted, &gold)?)
                }
                _ => None,
            };
            rows.push(AblationRow {
                variant: v,
                accuracy,
                mcnemar_vs_full,
            });
        }
        let p = self.layout.ablation();
        self.artifact("ablate", self.cfg.stage_seed(SeedStream::Classifier), rows.clone()).save(&p)?;
        outputs.push(p);
        Ok((outputs, serde_json::to_value(rows)?))
    }

    fn inspect(&self) -> Result<(Vec<PathBuf>, serde_json::Value)> {
        let mut outputs = Vec::new();
        let mut summary = serde_json::Map::new();
        let raw = self.load_embeddings(Side::Source)?;
        let enc_s = self.load_encoder(Side::Source)?;
        if !self.cfg.inspect_words.is_empty() {
            let words = WordsExport {
                raw: inspect_words(&self.cfg.inspect_words, &raw)?,
                fine_tuned: inspect_words(&self.cfg.inspect_words, &enc_s.embedding_table())?,
            };
            let p = self.layout.inspect_words();
            self.artifact("inspect", self.cfg.seed, words).save(&p)?;
            outputs.push(p);
            summary.insert("words".into(), self.cfg.inspect_words.len().into());
        }
        let (params, _) = self.load_classifier(Variant::Full)?;
        let enc_t = self.load_encoder(Side::Target)?;
        let encoders = Encoders {
            source: Some(&enc_s),
            target: Some(&enc_t),
        };
        let dict = self.dictionary()?;
        let bridge = Bridge {
            oracle: &dict,
            source: &self.cfg.source_language,
            target: &self.cfg.target_language,
            segmenter: &DefaultSegmenter,
        };
        let docs = self.load_documents(&self.layout.test_target())?;
        let exported: Vec<DocumentAttention> = docs
            .iter()
            .take(self.cfg.attention_docs)
            .map(|d| export_attention(d, &bridge, &encoders, &params))
            .collect::<Result<_>>()?;
        let p = self.layout.attention();
        summary.insert("attention_documents".into(), exported.len().into());
        self.artifact("inspect", self.cfg.seed, exported).save(&p)?;
        outputs.push(p);
        Ok((outputs, serde_json::Value::Object(summary)))
    }
}

pub fn load_embeddings<T: Scalar>(path: &Path) -> Result<EmbeddingTable<T>> {
    let ck = Checkpoint::<T>::load(path)?;
    let meta: EmbeddingMeta = ck.meta_as()?;
    EmbeddingTable::new(meta.vocab, ck.tensor("embedding")?.clone())
}

pub fn load_encoder<T: Scalar>(path: &Path) -> Result<EncoderParams<T>> {
    let ck = Checkpoint::<T>::load(path)?;
    let meta: EncoderMeta = ck.meta_as()?;
    let dims = EncoderDims {
        vocab_size: meta.vocab.len(),
        embed_dim: meta.embed_dim,
        hidden1: meta.hidden1,
        hidden2: meta.hidden2,
        classes: meta.emojis.len(),
    };
    let mut params = EncoderParams::random(dims, &mut Prng::new(0));
    params.vocab = meta.vocab;
    params.emojis = meta.emojis;
    params.max_len = meta.max_len;
    params.dropout = meta.dropout;
    let values = ck.values_for(&params)?;
    params.set_values(values)?;
    params.validate()?;
    params.freeze();
    Ok(params)
}

pub fn classifier_meta<T: Scalar>(params: &SentimentClassifierParams<T>) -> ClassifierMeta {
    ClassifierMeta {
        variant: params.variant,
        classes: params.classes,
        sides: params
            .sides
            .iter()
            .map(|s| SideMeta {
                side: s.side,
                dim: s.dim(),
                word_encoder: s.word_encoder.as_ref().map(|w| WordEncoderMeta {
                    vocab: w.vocab.clone(),
                    max_len: w.max_len,
                }),
            })
            .collect(),
    }
}

pub fn load_classifier<T: Scalar>(path: &Path) -> Result<(SentimentClassifierParams<T>, Checkpoint<T>)> {
    let ck = Checkpoint::<T>::load(path)?;
    let meta: ClassifierMeta = ck.meta_as()?;
    let sides: Vec<ClassifierSide<T>> = meta
        .sides
        .iter()
        .map(|s| {
            let name = s.side.as_str();
            ClassifierSide {
                side: s.side,
                word_encoder: s.word_encoder.as_ref().map(|w| WordAttentionEncoder {
                    vocab: w.vocab.clone(),
                    max_len: w.max_len,
                    embedding: ParamTensor::zeros(format!("{name}.embedding"), w.vocab.len(), s.dim),
                    attention: ParamTensor::zeros(format!("{name}.word_attn"), 1, s.dim),
                }),
                doc_attention: ParamTensor::zeros(format!("{name}.doc_attn"), 1, s.dim),
            }
        })
        .collect();
    let input: usize = meta.sides.iter().map(|s| s.dim).sum();
    let mut params = SentimentClassifierParams {
        variant: meta.variant,
        classes: meta.classes,
        sides,
        output_weights: ParamTensor::zeros("softmax.W", meta.classes, input),
        output_bias: ParamTensor::zeros("softmax.b", meta.classes, 1),
    };
    let values = ck.values_for(&params)?;
    for (p, v) in params.params_mut().into_iter().zip(values) {
        p.value.check_same_shape(&v)?;
        p.value = v;
    }
    Ok((params, ck))
}

/// Reads a predictions file: one header line, then one record per document.
pub fn read_predictions(path: &Path) -> Result<(PredictionHeader, Vec<Prediction>)> {
    #[derive(Deserialize)]
    struct HeaderLine {
        header: PredictionHeader,
    }
    let file = File::open(path).map_err(|e| ElsaError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let bad = |m: String| ElsaError::Data(format!("{}: {m}", path.display()));
    let first = lines
        .next()
        .ok_or_else(|| bad("empty predictions file".into()))?
        .map_err(|e| ElsaError::io(path, e))?;
    let header: HeaderLine = serde_json::from_str(&first).map_err(|e| bad(format!("header: {e}")))?;
    let mut preds = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| ElsaError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        preds.push(serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", i + 2)))?);
    }
    Ok((header.header, preds))
}
