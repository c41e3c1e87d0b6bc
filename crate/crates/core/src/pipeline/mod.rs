//! Stage orchestration, checkpoints, evaluation, subsampling, the synthetic
//! fixture and inspection exports.

mod checkpoint;
mod config;
mod eval;
mod fixture;
mod inspect;
mod stages;

pub use checkpoint::{Artifact, Checkpoint, Manifest, TensorEntry, FORMAT_VERSION, MAGIC};
pub use config::{DataPaths, PipelineConfig, Precision, SeedStream};
pub use eval::{evaluate, mcnemar, mcnemar_counts, subsample, EvalReport, McNemar, CHI2_1DF_5PCT};
pub use fixture::{fixture_config, generate_fixture, write_fixture, FixtureData, FixtureSpec, Lexicon};
pub use inspect::{
    export_attention, inspect_words, mean_intra_group_cosine, DocumentAttention, SentenceAttention,
    WordInspection,
};
pub use stages::{
    classifier_meta, load_classifier, load_embeddings, load_encoder, read_predictions, run_all, run_stage,
    AblationRow, ClassifierMeta, EmbeddingMeta, EmojiSplits, EncoderMeta, EncoderReport, Layout, Prediction,
    PredictionHeader, PreprocessSummary, RunOptions, SideMeta, Stage, StageOutcome, WordEncoderMeta,
    WordsExport,
};
