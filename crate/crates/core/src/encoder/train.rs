use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::encoder::model::{dropout_mask, EncoderParams};
use crate::error::{ElsaError, Result};
use crate::numcore::{argmax, clip_global_norm, safe_ln, Adam, AdamConfig, ParamSet, Prng, Scalar};
use crate::textprep::{EmojiExample, EmojiVocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Hidden units per direction, shared by both LSTM layers.
    pub hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub patience: usize,
    pub max_len: usize,
    /// Global-norm clipping threshold; 0 disables.
    pub clip_norm: f64,
    pub embedding_l2: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden: 32,
            dropout: 0.5,
            epochs: 50,
            batch_size: 250,
            adam: AdamConfig::default(),
            patience: 3,
            max_len: 32,
            clip_norm: 5.0,
            embedding_l2: 1e-6,
            seed: 1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.hidden == 0 || self.batch_size == 0 || self.epochs == 0 || self.max_len == 0 {
            return Err(ElsaError::Config(format!("invalid encoder config {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) || self.clip_norm < 0.0 || self.embedding_l2 < 0.0 {
            return Err(ElsaError::Config(format!("invalid encoder config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderTrainingReport {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub valid_accuracy: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Mean cross-entropy and top-1 accuracy without dropout.
pub fn evaluate_emoji<T: Scalar>(params: &EncoderParams<T>, examples: &[(Vec<usize>, usize)]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut hits = 0usize;
    for (ids, class) in examples {
        let probs = params.forward(ids, None)?.probs;
        loss -= safe_ln(probs[*class]).as_f64();
        if argmax(&probs) == *class {
            hits += 1;
        }
    }
    let n = examples.len().max(1) as f64;
    Ok((loss / n, hits as f64 / n))
}

fn encode_examples<T: Scalar>(
    params: &EncoderParams<T>,
    examples: &[EmojiExample],
) -> Result<Vec<(Vec<usize>, usize)>> {
    let k = params.emojis.len();
    examples
        .iter()
        .map(|e| {
            if e.emoji_class >= k {
                return Err(ElsaError::Data(format!(
                    "emoji class {} outside [0, {k})",
                    e.emoji_class
                )));
            }
            Ok((params.token_ids(&e.tokens)?, e.emoji_class))
        })
        .collect()
}

/// Mini-batch Adam on emoji cross-entropy with early stopping on
/// validation loss. Returns the best epoch's parameters, frozen.
pub fn train_encoder<T: Scalar>(
    train: &[EmojiExample],
    valid: &[EmojiExample],
    config: &EncoderConfig,
    init_embed: &EmbeddingTable<T>,
    emojis: &EmojiVocabulary,
) -> Result<(EncoderParams<T>, EncoderTrainingReport)> {
    config.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(ElsaError::Size(format!(
            "need nonempty train and validation sets, got {} and {}",
            train.len(),
            valid.len()
        )));
    }
    let mut rng = Prng::new(config.seed);
    let mut params = EncoderParams::init(
        init_embed,
        emojis,
        config.hidden,
        config.max_len,
        config.dropout,
        &mut rng,
    )?;
    params.embedding.l2_coeff = config.embedding_l2;
    let train_set = encode_examples(&params, train)?;
    let valid_set = encode_examples(&params, valid)?;
    let mut adam = Adam::new(config.adam, &params.params());

    let mut report = EncoderTrainingReport {
        train_loss: Vec::new(),
        valid_loss: Vec::new(),
        valid_accuracy: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best: Option<(f64, EncoderParams<T>)> = None;
    let mut wait = 0usize;
    let u_dim = params.u_dim();

    for epoch in 0..config.epochs {
        let order = rng.permutation(train_set.len());
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(Vec<usize>, usize)> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let masks: Option<Vec<Vec<T>>> = (config.dropout > 0.0).then(|| {
                (0..batch.len())
                    .map(|_| dropout_mask(u_dim, config.dropout, &mut rng))
                    .collect()
            });
            let loss = params.batch_gradient(&batch, masks.as_deref())?;
            epoch_loss += loss.as_f64() * batch.len() as f64;
            clip_global_norm(&mut params.params_mut(), config.clip_norm);
            adam.step(&mut params.params_mut())?;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(ElsaError::InvalidValue(format!("training loss diverged at epoch {epoch}")));
        }
        let (valid_loss, valid_acc) = evaluate_emoji(&params, &valid_set)?;
        log::info!(
            "encoder epoch {epoch}: train {train_loss:.4} valid {valid_loss:.4} acc {valid_acc:.3}"
        );
        report.train_loss.push(train_loss);
        report.valid_loss.push(valid_loss);
        report.valid_accuracy.push(valid_acc);

        let improved = best.as_ref().is_none_or(|(b, _)| valid_loss < *b);
        if improved {
            best = Some((valid_loss, params.clone()));
            report.best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait >= config.patience {
                report.stopped_early = epoch + 1 < config.epochs;
                break;
            }
        }
    }
    let (_, mut params) = best.expect("at least one epoch ran");
    params.zero_grads();
    params.freeze();
    Ok((params, report))
}
