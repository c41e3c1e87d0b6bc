use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::docsent::attention::{doc_attention, DocumentRepresentation};
use crate::docsent::translate::TranslationOracle;
use crate::embed::EmbeddingTable;
use crate::encoder::{attention_backward, word_attention, Attended, EncoderParams, EMBEDDING_L2};
use crate::error::{ElsaError, Result};
use crate::numcore::{argmax, safe_ln, softmax_unchecked, ParamSet, ParamTensor, Prng, Scalar};
use crate::textprep::{prepare_text, LabeledDocument, Language, Segmenter, TokenSequence, Vocabulary, PAD_ID};

/// Which representations feed the sentiment classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Both emoji-pretrained encoders, joint `[r_s, r_t]`.
    Full,
    /// No emoji pretraining: embeddings plus two attention layers per
    /// language, trained on sentiment labels.
    N,
    /// Target-language encoder only.
    T,
    /// Source-language encoder only.
    S,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::N, Variant::T, Variant::S];

    pub fn sides(self) -> &'static [Side] {
        match self {
            Variant::Full | Variant::N => &[Side::Source, Side::Target],
            Variant::S => &[Side::Source],
            Variant::T => &[Side::Target],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::N => "n",
            Variant::T => "t",
            Variant::S => "s",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ElsaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Variant::Full),
            "n" => Ok(Variant::N),
            "t" => Ok(Variant::T),
            "s" => Ok(Variant::S),
            other => Err(ElsaError::Config(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Source => "source",
            Side::Target => "target",
        }
    }
}

/// Translation setup shared by training and inference.
#[derive(Clone, Copy)]
pub struct Bridge<'a> {
    pub oracle: &'a dyn TranslationOracle,
    pub source: &'a Language,
    pub target: &'a Language,
    pub segmenter: &'a dyn Segmenter,
}

impl<'a> Bridge<'a> {
    pub fn language(&self, side: Side) -> &'a Language {
        match side {
            Side::Source => self.source,
            Side::Target => self.target,
        }
    }

    pub fn side_of(&self, language: &Language) -> Result<Side> {
        if language == self.source {
            Ok(Side::Source)
        } else if language == self.target {
            Ok(Side::Target)
        } else {
            Err(ElsaError::Data(format!(
                "document language {language} is neither {} nor {}",
                self.source, self.target
            )))
        }
    }

    /// The document's sentences in `side`'s language, translating sentence
    /// by sentence when the document is written in the other language.
    pub fn sentences_for(&self, doc: &LabeledDocument, side: Side) -> Result<Vec<TokenSequence>> {
        let from = self.side_of(&doc.language)?;
        if from == side {
            return Ok(doc.sentences.clone());
        }
        let (src, tgt) = (self.language(from), self.language(side));
        doc.sentence_texts
            .iter()
            .enumerate()
            .map(|(index, s)| {
                let out = self
                    .oracle
                    .translate(s, src, tgt)
                    .map_err(|e| ElsaError::Translation {
                        index,
                        message: e.to_string(),
                    })?;
                let tokens = prepare_text(&out, self.segmenter);
                if tokens.is_empty() {
                    return Err(ElsaError::Translation {
                        index,
                        message: "translation is empty".into(),
                    });
                }
                Ok(tokens)
            })
            .collect()
    }
}

/// Frozen emoji-pretrained encoders, by side.
#[derive(Debug, Clone, Copy)]
pub struct Encoders<'a, T> {
    pub source: Option<&'a EncoderParams<T>>,
    pub target: Option<&'a EncoderParams<T>>,
}

impl<'a, T> Default for Encoders<'a, T> {
    fn default() -> Self {
        Encoders {
            source: None,
            target: None,
        }
    }
}

impl<'a, T> Encoders<'a, T> {
    pub fn get(&self, side: Side) -> Option<&'a EncoderParams<T>> {
        match side {
            Side::Source => self.source,
            Side::Target => self.target,
        }
    }
}

/// Inputs from which [`build_ablation`] assembles a classifier.
#[derive(Debug, Clone, Copy)]
pub struct AblationComponents<'a, T> {
    pub encoders: Encoders<'a, T>,
    pub embeddings_source: Option<&'a EmbeddingTable<T>>,
    pub embeddings_target: Option<&'a EmbeddingTable<T>>,
}

impl<'a, T> AblationComponents<'a, T> {
    fn embeddings(&self, side: Side) -> Option<&'a EmbeddingTable<T>> {
        match side {
            Side::Source => self.embeddings_source,
            Side::Target => self.embeddings_target,
        }
    }
}

/// Trainable embedding lookup followed by word attention.
#[derive(Debug, Clone, PartialEq)]
pub struct WordAttentionEncoder<T> {
    pub vocab: Vocabulary,
    pub max_len: usize,
    pub embedding: ParamTensor<T>,
    pub attention: ParamTensor<T>,
}

impl<T: Scalar> WordAttentionEncoder<T> {
    pub fn from_table(prefix: &str, table: &EmbeddingTable<T>, max_len: usize) -> Self {
        WordAttentionEncoder {
            vocab: table.vocab.clone(),
            max_len,
            embedding: ParamTensor::new(format!("{prefix}.embedding"), table.vectors.clone())
                .with_l2(EMBEDDING_L2),
            attention: ParamTensor::zeros(format!("{prefix}.word_attn"), 1, table.dim()),
        }
    }

    pub fn dim(&self) -> usize {
        self.embedding.value.cols()
    }

    pub fn token_ids(&self, tokens: &TokenSequence) -> Result<Vec<usize>> {
        if tokens.is_empty() {
            return Err(ElsaError::Degenerate("empty sentence".into()));
        }
        Ok(tokens.iter().take(self.max_len).map(|t| self.vocab.id(t)).collect())
    }

    pub fn encode(&self, ids: &[usize]) -> Result<(Vec<Vec<T>>, Attended<T>)> {
        let rows = self.embedding.value.rows();
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(ElsaError::Range(format!("token id {bad} ≥ vocabulary size {rows}")));
        }
        let u: Vec<Vec<T>> = ids.iter().map(|&i| self.embedding.value.row(i).to_vec()).collect();
        let mask: Vec<bool> = ids.iter().map(|&i| i != PAD_ID).collect();
        let att = word_attention(&u, self.attention.value.as_slice(), &mask)?;
        Ok((u, att))
    }

    fn backward(&mut self, ids: &[usize], u: &[Vec<T>], att: &Attended<T>, dv: &[T]) {
        let du = attention_backward(
            u,
            self.attention.value.as_slice(),
            &att.scores,
            dv,
            self.attention.grad.as_mut_slice(),
        );
        for (&id, g) in ids.iter().zip(&du) {
            if id == PAD_ID {
                continue;
            }
            for (e, &x) in self.embedding.grad.row_mut(id).iter_mut().zip(g) {
                *e += x;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSide<T> {
    pub side: Side,
    /// Present only for [`Variant::N`].
    pub word_encoder: Option<WordAttentionEncoder<T>>,
    pub doc_attention: ParamTensor<T>,
}

impl<T: Scalar> ClassifierSide<T> {
    pub fn dim(&self) -> usize {
        self.doc_attention.value.cols()
    }
}

/// Document attention per side plus one affine softmax layer over the
/// concatenated side vectors (source first).
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentClassifierParams<T> {
    pub variant: Variant,
    pub classes: usize,
    pub sides: Vec<ClassifierSide<T>>,
    pub output_weights: ParamTensor<T>,
    pub output_bias: ParamTensor<T>,
}

/// Per-side model input for one document.
#[derive(Debug, Clone, PartialEq)]
pub enum SideInput<T> {
    /// Sentence vectors from a frozen encoder.
    Vectors(Vec<Vec<T>>),
    /// Token ids per sentence for a trainable word encoder.
    Ids(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocInput<T> {
    pub sides: Vec<SideInput<T>>,
}

#[derive(Debug, Clone)]
pub struct SideCache<T> {
    /// Embedded tokens and word attention per sentence (word encoders only).
    pub words: Vec<(Vec<Vec<T>>, Attended<T>)>,
    pub sentence_vectors: Vec<Vec<T>>,
    pub doc: DocumentRepresentation<T>,
}

#[derive(Debug, Clone)]
pub struct ClassifierCache<T> {
    pub sides: Vec<SideCache<T>>,
    pub joint: Vec<T>,
    pub probs: Vec<T>,
}

/// Assembles an untrained classifier for `variant`. Missing components
/// required by the variant are a configuration error.
pub fn build_ablation<T: Scalar>(
    variant: Variant,
    components: &AblationComponents<T>,
    classes: usize,
    max_len: usize,
    rng: &mut Prng,
) -> Result<SentimentClassifierParams<T>> {
    if classes < 2 {
        return Err(ElsaError::Config(format!("need at least 2 classes, got {classes}")));
    }
    let mut sides = Vec::new();
    for &side in variant.sides() {
        let name = side.as_str();
        let (word_encoder, dim) = if variant == Variant::N {
            let table = components.embeddings(side).ok_or_else(|| {
                ElsaError::Config(format!("variant {variant} needs {name} embeddings"))
            })?;
            (Some(WordAttentionEncoder::from_table(name, table, max_len)), table.dim())
        } else {
            let enc = components.encoders.get(side).ok_or_else(|| {
                ElsaError::Config(format!("variant {variant} needs the {name} encoder"))
            })?;
            if !enc.frozen {
                return Err(ElsaError::Config(format!("{name} encoder is not frozen")));
            }
            (None, enc.u_dim())
        };
        sides.push(ClassifierSide {
            side,
            word_encoder,
            doc_attention: ParamTensor::zeros(format!("{name}.doc_attn"), 1, dim),
        });
    }
    let input: usize = sides.iter().map(ClassifierSide::dim).sum();
    Ok(SentimentClassifierParams {
        variant,
        classes,
        sides,
        output_weights: ParamTensor::glorot("softmax.W", classes, input, input, classes, rng),
        output_bias: ParamTensor::zeros("softmax.b", classes, 1),
    })
}

impl<T: Scalar> SentimentClassifierParams<T> {
    pub fn input_dim(&self) -> usize {
        self.output_weights.value.cols()
    }

    pub fn side(&self, side: Side) -> Option<&ClassifierSide<T>> {
        self.sides.iter().find(|s| s.side == side)
    }

    /// Translates and encodes `doc` into this classifier's input.
    pub fn prepare(&self, doc: &LabeledDocument, bridge: &Bridge, encoders: &Encoders<T>) -> Result<DocInput<T>> {
        let mut sides = Vec::with_capacity(self.sides.len());
        for cs in &self.sides {
            let sentences = bridge.sentences_for(doc, cs.side)?;
            let input = match &cs.word_encoder {
                Some(w) => SideInput::Ids(sentences.iter().map(|s| w.token_ids(s)).collect::<Result<_>>()?),
                None => {
                    let enc = encoders.get(cs.side).ok_or_else(|| {
                        ElsaError::Config(format!("missing the {} encoder", cs.side.as_str()))
                    })?;
                    if enc.u_dim() != cs.dim() {
                        return Err(ElsaError::Shape(format!(
                            "{} encoder width {} vs classifier {}",
                            cs.side.as_str(),
                            enc.u_dim(),
                            cs.dim()
                        )));
                    }
                    SideInput::Vectors(
                        sentences
                            .iter()
                            .map(|s| enc.encode_sentence(s).map(|r| r.vector))
                            .collect::<Result<_>>()?,
                    )
                }
            };
            sides.push(input);
        }
        Ok(DocInput { sides })
    }

    pub fn forward(&self, input: &DocInput<T>) -> Result<ClassifierCache<T>> {
        if input.sides.len() != self.sides.len() {
            return Err(ElsaError::Shape(format!(
                "{} side inputs for {} sides",
                input.sides.len(),
                self.sides.len()
            )));
        }
        let mut sides = Vec::with_capacity(self.sides.len());
        let mut joint = Vec::with_capacity(self.input_dim());
        for (cs, si) in self.sides.iter().zip(&input.sides) {
            let (words, sentence_vectors) = match (si, &cs.word_encoder) {
                (SideInput::Vectors(v), None) => (Vec::new(), v.clone()),
                (SideInput::Ids(ids), Some(w)) => {
                    let words: Vec<_> = ids.iter().map(|s| w.encode(s)).collect::<Result<_>>()?;
                    let vs = words.iter().map(|(_, a)| a.pooled.clone()).collect();
                    (words, vs)
                }
                _ => return Err(ElsaError::Shape("side input kind does not match the classifier".into())),
            };
            let doc = doc_attention(&sentence_vectors, cs.doc_attention.value.as_slice())?;
            joint.extend_from_slice(&doc.vector);
            sides.push(SideCache {
                words,
                sentence_vectors,
                doc,
            });
        }
        let mut logits = self.output_bias.value.as_slice().to_vec();
        self.output_weights.value.matvec_acc(&joint, &mut logits);
        let probs = softmax_unchecked(&logits);
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(ElsaError::InvalidValue("non-finite class probabilities".into()));
        }
        Ok(ClassifierCache { sides, joint, probs })
    }

    /// Most probable class (lowest id on ties) and the distribution.
    pub fn predict(&self, input: &DocInput<T>) -> Result<(usize, Vec<T>)> {
        let probs = self.forward(input)?.probs;
        Ok((argmax(&probs), probs))
    }

    fn backward(&mut self, input: &DocInput<T>, cache: &ClassifierCache<T>, label: usize, scale: T) {
        let mut dlogits = cache.probs.clone();
        dlogits[label] -= T::one();
        dlogits.iter_mut().for_each(|g| *g *= scale);
        self.output_weights.grad.add_outer(&dlogits, &cache.joint);
        for (b, &g) in self.output_bias.grad.as_mut_slice().iter_mut().zip(&dlogits) {
            *b += g;
        }
        let mut dr = vec![T::zero(); self.input_dim()];
        self.output_weights.value.t_matvec_acc(&dlogits, &mut dr);

        let mut offset = 0;
        for ((cs, sc), si) in self.sides.iter_mut().zip(&cache.sides).zip(&input.sides) {
            let dim = cs.dim();
            let dv = attention_backward(
                &sc.sentence_vectors,
                cs.doc_attention.value.as_slice(),
                &sc.doc.sentence_attention,
                &dr[offset..offset + dim],
                cs.doc_attention.grad.as_mut_slice(),
            );
            offset += dim;
            if let (Some(w), SideInput::Ids(ids)) = (cs.word_encoder.as_mut(), si) {
                for ((sent_ids, (u, att)), g) in ids.iter().zip(&sc.words).zip(&dv) {
                    w.backward(sent_ids, u, att, g);
                }
            }
        }
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.classes {
            return Err(ElsaError::Data(format!("label {label} outside [0, {})", self.classes)));
        }
        Ok(())
    }

    /// Mean cross-entropy over `batch` plus L2 penalties.
    pub fn batch_loss(&self, batch: &[(&DocInput<T>, usize)]) -> Result<T> {
        if batch.is_empty() {
            return Err(ElsaError::Size("empty batch".into()));
        }
        let mut total = T::zero();
        for &(input, label) in batch {
            self.check_label(label)?;
            total += -safe_ln(self.forward(input)?.probs[label]);
        }
        let l2: T = self.params().iter().map(|p| p.l2_penalty()).sum();
        Ok(total / T::of(batch.len() as f64) + l2)
    }

    /// Zeroes gradients, fills them with ∂(batch_loss)/∂θ and returns the
    /// batch loss.
    pub fn batch_gradient(&mut self, batch: &[(&DocInput<T>, usize)]) -> Result<T> {
        if batch.is_empty() {
            return Err(ElsaError::Size("empty batch".into()));
        }
        self.zero_grads();
        let scale = T::one() / T::of(batch.len() as f64);
        let mut total = T::zero();
        for &(input, label) in batch {
            self.check_label(label)?;
            let cache = self.forward(input)?;
            total += -safe_ln(cache.probs[label]);
            self.backward(input, &cache, label, scale);
        }
        let mut l2 = T::zero();
        for p in self.params_mut() {
            l2 += p.l2_penalty();
            p.add_l2_grad();
        }
        for cs in &mut self.sides {
            if let Some(w) = cs.word_encoder.as_mut() {
                w.embedding.grad.row_mut(PAD_ID).fill(T::zero());
            }
        }
        Ok(total * scale + l2)
    }
}

impl<T: Scalar> ParamSet<T> for SentimentClassifierParams<T> {
    fn params(&self) -> Vec<&ParamTensor<T>> {
        let mut v = Vec::new();
        for cs in &self.sides {
            if let Some(w) = &cs.word_encoder {
                v.push(&w.embedding);
                v.push(&w.attention);
            }
            v.push(&cs.doc_attention);
        }
        v.push(&self.output_weights);
        v.push(&self.output_bias);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        let mut v = Vec::new();
        for cs in &mut self.sides {
            if let Some(w) = &mut cs.word_encoder {
                v.push(&mut w.embedding);
                v.push(&mut w.attention);
            }
            v.push(&mut cs.doc_attention);
        }
        v.push(&mut self.output_weights);
        v.push(&mut self.output_bias);
        v
    }
}
