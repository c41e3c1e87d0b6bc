pub mod error;
pub mod numcore;
pub mod textprep;
pub mod embed;
pub mod encoder;
pub mod docsent;
pub mod pipeline;

pub use error::{ElsaError, Result};

pub type EncoderParams32 = encoder::EncoderParams<f32>;
pub type EncoderParams64 = encoder::EncoderParams<f64>;
pub type EmbeddingTable32 = embed::EmbeddingTable<f32>;
pub type EmbeddingTable64 = embed::EmbeddingTable<f64>;
pub type Classifier32 = docsent::SentimentClassifierParams<f32>;
pub type Classifier64 = docsent::SentimentClassifierParams<f64>;
pub type Matrix32 = numcore::DenseMatrix<f32>;
pub type Matrix64 = numcore::DenseMatrix<f64>;
