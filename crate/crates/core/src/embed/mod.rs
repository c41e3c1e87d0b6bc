//! Skip-gram word embeddings and representation-inspection tools.

mod cluster;
mod similarity;
mod skipgram;

pub use cluster::{cosine_distance_matrix, hierarchical_cluster, Merge, MergeTree};
pub use similarity::cosine_similarity;
pub use skipgram::{
    generate_pairs, train_skipgram, EmbeddingTable, SkipGramConfig, SkipGramReport,
};
