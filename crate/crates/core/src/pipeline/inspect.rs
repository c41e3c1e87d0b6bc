use serde::{Deserialize, Serialize};

use crate::docsent::{doc_attention, Bridge, Encoders, SentimentClassifierParams};
use crate::embed::{cosine_similarity, hierarchical_cluster, EmbeddingTable, MergeTree};
use crate::error::{ElsaError, Result};
use crate::numcore::Scalar;
use crate::textprep::LabeledDocument;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordInspection {
    /// Words as requested.
    pub words: Vec<String>,
    /// `false` for words that would map to UNK; those are left out below.
    pub in_vocabulary: Vec<bool>,
    /// Resolved words, in request order.
    pub resolved: Vec<String>,
    /// Pairwise cosine similarity of the resolved words.
    pub similarity: Vec<Vec<f64>>,
    pub tree: MergeTree,
}

/// Similarity matrix and average-linkage merge tree for `words`.
pub fn inspect_words<T: Scalar>(words: &[String], table: &EmbeddingTable<T>) -> Result<WordInspection> {
    let in_vocabulary: Vec<bool> = words.iter().map(|w| table.vocab.contains(w)).collect();
    let items: Vec<(String, Vec<T>)> = words
        .iter()
        .zip(&in_vocabulary)
        .filter(|(_, &ok)| ok)
        .map(|(w, _)| (w.clone(), table.vector(w).to_vec()))
        .collect();
    if items.len() < 2 {
        return Err(ElsaError::Size(format!(
            "{} of {} words are in the vocabulary; need 2",
            items.len(),
            words.len()
        )));
    }
    let tree = hierarchical_cluster(&items)?;
    let similarity = items
        .iter()
        .map(|(_, a)| items.iter().map(|(_, b)| cosine_similarity(a, b)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    Ok(WordInspection {
        words: words.to_vec(),
        in_vocabulary,
        resolved: items.into_iter().map(|(w, _)| w).collect(),
        similarity,
        tree,
    })
}

/// Mean pairwise cosine similarity within each group, averaged over groups.
pub fn mean_intra_group_cosine<T: Scalar>(groups: &[Vec<String>], table: &EmbeddingTable<T>) -> Result<f64> {
    let mut means = Vec::new();
    for g in groups {
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..g.len() {
            for j in i + 1..g.len() {
                sum += cosine_similarity(table.vector(&g[i]), table.vector(&g[j]))?;
                n += 1;
            }
        }
        if n == 0 {
            return Err(ElsaError::Size("each group needs at least 2 words".into()));
        }
        means.push(sum / n as f64);
    }
    if means.is_empty() {
        return Err(ElsaError::Size("no groups".into()));
    }
    Ok(means.iter().sum::<f64>() / means.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceAttention {
    pub tokens: Vec<String>,
    pub word_scores: Vec<f64>,
    pub sentence_score: f64,
    pub top_emojis: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentAttention {
    pub doc_id: String,
    pub language: String,
    pub sentences: Vec<SentenceAttention>,
}

/// Word and sentence attention of `doc` in its own language, with the top
/// emojis per sentence.
pub fn export_attention<T: Scalar>(
    doc: &LabeledDocument,
    bridge: &Bridge,
    encoders: &Encoders<T>,
    params: &SentimentClassifierParams<T>,
) -> Result<DocumentAttention> {
    let side = bridge.side_of(&doc.language)?;
    let missing = |what: &str| ElsaError::Dependency {
        stage: what.to_string(),
        path: format!("{} {}", side.as_str(), what).into(),
    };
    let encoder = encoders.get(side).ok_or_else(|| missing("train-encoder"))?;
    let cs = params.side(side).ok_or_else(|| missing("train-classifier"))?;
    let reps = doc
        .sentences
        .iter()
        .map(|s| encoder.encode_sentence(s))
        .collect::<Result<Vec<_>>>()?;
    let vectors: Vec<Vec<T>> = reps.iter().map(|r| r.vector.clone()).collect();
    let docrep = doc_attention(&vectors, cs.doc_attention.value.as_slice())?;
    let top_n = encoder.emojis.len().min(3);
    let sentences = reps
        .into_iter()
        .zip(&doc.sentences)
        .zip(&docrep.sentence_attention)
        .map(|((r, s), &beta)| {
            Ok(SentenceAttention {
                tokens: r.tokens,
                word_scores: r.attention.iter().map(|a| a.as_f64()).collect(),
                sentence_score: beta.as_f64(),
                top_emojis: encoder.predict_top_emojis(s, top_n)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DocumentAttention {
        doc_id: doc.id.clone(),
        language: doc.language.to_string(),
        sentences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::DenseMatrix;
    use crate::textprep::Vocabulary;

    fn table() -> EmbeddingTable<f64> {
        let vocab = Vocabulary::from_tokens(vec!["a".into(), "b".into(), "c".into()], 1);
        let rows = [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 0.1], [0.0, 1.0]];
        let vectors = DenseMatrix::from_fn(7, 2, |r, c| rows[r][c]);
        EmbeddingTable::new(vocab, vectors).unwrap()
    }

    #[test]
    fn two_words_one_merge() {
        let r = inspect_words(&["a".into(), "c".into()], &table()).unwrap();
        assert_eq!(r.similarity.len(), 2);
        assert!(r.similarity[0][1].abs() < 1e-15);
        assert_eq!(r.tree.merges.len(), 1);
    }

    #[test]
    fn unknown_words_are_flagged_and_duplicates_rejected() {
        let r = inspect_words(&["a".into(), "zz".into(), "b".into()], &table()).unwrap();
        assert_eq!(r.in_vocabulary, vec![true, false, true]);
        assert_eq!(r.resolved, vec!["a", "b"]);
        assert!(matches!(
            inspect_words(&["a".into(), "zz".into()], &table()),
            Err(ElsaError::Size(_))
        ));
        assert!(matches!(
            inspect_words(&["a".into(), "a".into()], &table()),
            Err(ElsaError::DuplicateKey(_))
        ));
    }

    #[test]
    fn intra_group_mean() {
        let m = mean_intra_group_cosine(&[vec!["a".into(), "b".into()]], &table()).unwrap();
        let want = 1.0 / (1.0f64 + 0.01).sqrt();
        assert!((m - want).abs() < 1e-15);
    }
}
