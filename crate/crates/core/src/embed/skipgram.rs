use serde::{Deserialize, Serialize};

use crate::error::{ElsaError, Result};
use crate::numcore::{dot, sigmoid, DenseMatrix, Prng, Scalar};
use crate::textprep::{TokenSequence, Vocabulary, PAD_ID};

/// Word vectors, one row per vocabulary id (specials included).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    pub vocab: Vocabulary,
    pub vectors: DenseMatrix<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(vocab: Vocabulary, vectors: DenseMatrix<T>) -> Result<Self> {
        if vectors.rows() != vocab.len() {
            return Err(ElsaError::Shape(format!(
                "{} rows for a vocabulary of {}",
                vectors.rows(),
                vocab.len()
            )));
        }
        Ok(EmbeddingTable { vocab, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    /// Vector of `token`, falling back to the UNK row.
    pub fn vector(&self, token: &str) -> &[T] {
        self.vectors.row(self.vocab.id(token))
    }

    /// Human-readable export: `token TAB space-separated floats` per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, tok) in self.vocab.tokens().iter().enumerate() {
            out.push_str(tok);
            out.push('\t');
            let row: Vec<String> = self.vectors.row(id).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub dim: usize,
    pub lr: f64,
    pub seed: u64,
    /// Frequent-word subsampling threshold (word2vec's `t`); off when `None`.
    pub subsample: Option<f64>,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            window: 5,
            negatives: 5,
            epochs: 5,
            dim: 64,
            lr: 0.025,
            seed: 1,
            subsample: None,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 || self.negatives < 1 || self.dim < 2 || self.epochs < 1 {
            return Err(ElsaError::Config(format!("invalid skip-gram config {self:?}")));
        }
        if !(self.lr > 0.0) {
            return Err(ElsaError::Config("skip-gram lr must be positive".into()));
        }
        Ok(())
    }
}

/// All `(center, context)` pairs within `window`, in scan order.
pub fn generate_pairs(ids: &[usize], window: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, &center) in ids.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(ids.len().saturating_sub(1));
        for j in lo..=hi {
            if j != i {
                pairs.push((center, ids[j]));
            }
        }
    }
    pairs
}

/// Cumulative unigram^0.75 distribution for negative sampling.
struct NoiseTable {
    cdf: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let mut cdf = Vec::with_capacity(counts.len());
        for &c in counts {
            acc += (c as f64).powf(0.75);
            cdf.push(acc);
        }
        for x in cdf.iter_mut() {
            *x /= acc;
        }
        NoiseTable { cdf }
    }

    fn sample(&self, rng: &mut Prng) -> usize {
        let u = rng.next_f64();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

/// Per-epoch training summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramReport {
    pub epoch_losses: Vec<f64>,
    pub pairs_per_epoch: usize,
}

/// Skip-gram with negative sampling, plain SGD with a linearly decaying
/// learning rate. Returns the input (center-word) table; the PAD row is
/// zero.
pub fn train_skipgram<'a, T, I>(
    corpus: I,
    vocab: &Vocabulary,
    config: &SkipGramConfig,
) -> Result<(EmbeddingTable<T>, SkipGramReport)>
where
    T: Scalar,
    I: IntoIterator<Item = &'a TokenSequence>,
{
    config.validate()?;
    let sentences: Vec<Vec<usize>> = corpus
        .into_iter()
        .map(|s| vocab.encode(s))
        .filter(|s| !s.is_empty())
        .collect();
    if sentences.is_empty() {
        return Err(ElsaError::EmptyCorpus);
    }
    let v = vocab.len();
    let d = config.dim;
    let mut counts = vec![0u64; v];
    for s in &sentences {
        for &id in s {
            counts[id] += 1;
        }
    }
    counts[PAD_ID] = 0;
    let total_tokens: u64 = counts.iter().sum();
    let noise = NoiseTable::new(&counts);

    let mut rng = Prng::new(config.seed);
    let bound = (6.0 / (v + d) as f64).sqrt();
    let mut input = DenseMatrix::<T>::from_fn(v, d, |_, _| rng.uniform(-bound, bound));
    let mut output = DenseMatrix::<T>::from_fn(v, d, |_, _| rng.uniform(-bound, bound));
    input.row_mut(PAD_ID).fill(T::zero());

    let keep_prob = |id: usize| -> f64 {
        match config.subsample {
            Some(t) if t > 0.0 => {
                let f = counts[id] as f64 / total_tokens as f64;
                ((t / f).sqrt() + t / f).min(1.0)
            }
            _ => 1.0,
        }
    };

    let pairs_per_epoch: usize = sentences
        .iter()
        .map(|s| generate_pairs(s, config.window).len())
        .sum();
    let total_steps = (pairs_per_epoch * config.epochs).max(1) as f64;
    let min_lr = config.lr * 1e-4;
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut grad_center = vec![T::zero(); d];

    for _ in 0..config.epochs {
        let mut loss = 0.0f64;
        let mut n = 0usize;
        for sent in &sentences {
            let kept: Vec<usize> = if config.subsample.is_some() {
                sent.iter()
                    .copied()
                    .filter(|&id| rng.next_f64() < keep_prob(id))
                    .collect()
            } else {
                sent.clone()
            };
            for (center, context) in generate_pairs(&kept, config.window) {
                let lr = (config.lr * (1.0 - step as f64 / total_steps)).max(min_lr);
                let lr_t = T::of(lr);
                step += 1;
                grad_center.iter_mut().for_each(|g| *g = T::zero());
                let center_vec = input.row(center).to_vec();
                for k in 0..=config.negatives {
                    let (target, label) = if k == 0 {
                        (context, T::one())
                    } else {
                        let mut t = noise.sample(&mut rng);
                        if t == context {
                            t = noise.sample(&mut rng);
                        }
                        (t, T::zero())
                    };
                    let out_row = output.row_mut(target);
                    let p = sigmoid(dot(&center_vec, out_row));
                    let pf = p.as_f64().clamp(1e-12, 1.0 - 1e-12);
                    loss -= if k == 0 { pf.ln() } else { (1.0 - pf).ln() };
                    let g = (label - p) * lr_t;
                    for ((gc, o), &c) in grad_center.iter_mut().zip(out_row.iter_mut()).zip(&center_vec) {
                        *gc += g * *o;
                        *o += g * c;
                    }
                }
                for (w, g) in input.row_mut(center).iter_mut().zip(&grad_center) {
                    *w += *g;
                }
                n += 1;
            }
        }
        epoch_losses.push(if n > 0 { loss / n as f64 } else { 0.0 });
    }
    input.row_mut(PAD_ID).fill(T::zero());
    if !input.is_finite() {
        return Err(ElsaError::InvalidValue("skip-gram diverged".into()));
    }
    Ok((
        EmbeddingTable::new(vocab.clone(), input)?,
        SkipGramReport {
            epoch_losses,
            pairs_per_epoch,
        },
    ))
}
