//! Document-level attention, translation bridging and the sentiment
//! classifier with its ablation variants.

mod attention;
mod classifier;
mod train;
mod translate;

pub use attention::{doc_attention, DocumentRepresentation};
pub use classifier::{
    build_ablation, AblationComponents, Bridge, ClassifierCache, ClassifierSide, DocInput, Encoders,
    SentimentClassifierParams, Side, SideCache, SideInput, Variant, WordAttentionEncoder,
};
pub use train::{
    classify, represent_document, train_classifier, ClassifierConfig, ClassifierTrainingReport,
    JointRepresentation,
};
pub use translate::{read_dictionary_tsv, DictionaryTranslator, IdentityTranslator, TranslationOracle};
