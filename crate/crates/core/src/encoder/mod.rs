//! The emoji-prediction sentence encoder.

mod attention;
mod lstm;
mod model;
mod train;

pub use attention::{attention_backward, attention_pool, word_attention, Attended};
pub use lstm::{
    bilstm_backward, bilstm_forward, bilstm_layer, lstm_cell_step, scan, scan_backward,
    stack_gates, BiLstmCache, Gate, LstmDirection, LstmLayerParams, ScanCache,
};
pub use model::{
    dropout_mask, EncoderDims, EncoderParams, ForwardCache, SentenceRepresentation, EMBEDDING_L2,
};
pub use train::{evaluate_emoji, train_encoder, EncoderConfig, EncoderTrainingReport};
