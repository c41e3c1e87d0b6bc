use crate::encoder::attention_pool;
use crate::error::{ElsaError, Result};
use crate::numcore::Scalar;

/// One language's document vector and its sentence attention.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentRepresentation<T> {
    pub vector: Vec<T>,
    pub sentence_attention: Vec<T>,
}

/// `β_i ∝ exp(w·v_i)`, `r = Σ β_i v_i`.
pub fn doc_attention<T: Scalar>(sentence_vectors: &[Vec<T>], weight: &[T]) -> Result<DocumentRepresentation<T>> {
    if sentence_vectors.is_empty() {
        return Err(ElsaError::Degenerate("document has no sentences".into()));
    }
    let a = attention_pool(sentence_vectors, weight)?;
    Ok(DocumentRepresentation {
        vector: a.pooled,
        sentence_attention: a.scores,
    })
}
