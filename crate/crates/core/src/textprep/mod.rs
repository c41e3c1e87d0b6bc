//! Tweet/review preprocessing: filtering, normalization, segmentation,
//! vocabularies, emoji-labeled example construction and dataset splits.

mod document;
mod emoji;
mod normalize;
mod split;
mod tokenize;
mod vocab;

pub use document::{
    document_sentences, filter_tweet, prepare_text, read_labeled_jsonl, write_labeled_jsonl,
    Language, LabeledDocument, LabeledRecord, RawText,
};
pub use emoji::{extract_emoji_examples, EmojiExample, EmojiVocabulary, DEFAULT_EMOJI_CLASSES};
pub use normalize::{compress_elongation, is_numeric, normalize_text};
pub use split::{partition_sizes, split_dataset, split_sentences, split_train_valid_test};
pub use tokenize::{
    is_emoji_grapheme, is_emoji_token, tokenize, DefaultSegmenter, Segmenter, TokenSequence,
};
pub use vocab::{build_vocab, Vocabulary, MENTION_ID, NUMBER_ID, PAD_ID, UNK_ID};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const MENTION_TOKEN: &str = "<mention>";
pub const NUMBER_TOKEN: &str = "<number>";

pub(crate) const SPECIAL_TOKENS: [&str; 4] = [PAD_TOKEN, UNK_TOKEN, MENTION_TOKEN, NUMBER_TOKEN];
