use serde::{Deserialize, Serialize};

use crate::docsent::attention::DocumentRepresentation;
use crate::docsent::classifier::{
    build_ablation, AblationComponents, Bridge, DocInput, Encoders, SentimentClassifierParams, Side, Variant,
};
use crate::error::{ElsaError, Result};
use crate::numcore::{argmax, clip_global_norm, safe_ln, Adam, AdamConfig, ParamSet, Prng, Scalar};
use crate::textprep::{split_dataset, LabeledDocument};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub patience: usize,
    pub clip_norm: f64,
    /// Sentence truncation for the word encoders of [`Variant::N`].
    pub max_len: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 50,
            batch_size: 32,
            adam: AdamConfig::default(),
            patience: 5,
            clip_norm: 5.0,
            max_len: 32,
            seed: 1,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.epochs == 0 || self.batch_size == 0 || self.max_len == 0 || self.clip_norm < 0.0 {
            return Err(ElsaError::Config(format!("invalid classifier config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainingReport {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub valid_accuracy: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Accuracy of the returned parameters on the training split.
    pub train_accuracy: f64,
    pub train_size: usize,
    pub valid_size: usize,
}

/// The joint vector of one document and its per-side parts.
#[derive(Debug, Clone, PartialEq)]
pub struct JointRepresentation<T> {
    pub sides: Vec<(Side, DocumentRepresentation<T>)>,
    pub joint: Vec<T>,
}

fn evaluate<T: Scalar>(params: &SentimentClassifierParams<T>, set: &[(DocInput<T>, usize)]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut hits = 0usize;
    for (input, label) in set {
        let probs = params.forward(input)?.probs;
        loss -= safe_ln(probs[*label]).as_f64();
        if argmax(&probs) == *label {
            hits += 1;
        }
    }
    let n = set.len().max(1) as f64;
    Ok((loss / n, hits as f64 / n))
}

fn encoder_bytes<T: Scalar>(encoders: &Encoders<T>) -> Vec<Vec<u8>> {
    [encoders.source, encoders.target]
        .iter()
        .flatten()
        .map(|e| e.value_bytes())
        .collect()
}

/// Trains the sentiment classifier of `variant` on labeled source-language
/// documents. Ten percent of the documents are held out for early stopping
/// on validation accuracy (validation loss breaks ties).
pub fn train_classifier<T: Scalar>(
    docs: &[LabeledDocument],
    bridge: &Bridge,
    components: &AblationComponents<T>,
    variant: Variant,
    classes: usize,
    config: &ClassifierConfig,
) -> Result<(SentimentClassifierParams<T>, ClassifierTrainingReport)> {
    config.validate()?;
    if docs.len() < 10 {
        return Err(ElsaError::Size(format!("need at least 10 labeled documents, got {}", docs.len())));
    }
    if let Some(d) = docs.iter().find(|d| &d.language != bridge.source) {
        return Err(ElsaError::Data(format!(
            "document {} is in {}, expected source language {}",
            d.id, d.language, bridge.source
        )));
    }
    if let Some(d) = docs.iter().find(|d| d.label >= classes) {
        return Err(ElsaError::Data(format!("document {} has label {} ≥ {classes}", d.id, d.label)));
    }
    let locked = encoder_bytes(&components.encoders);

    let mut rng = Prng::new(config.seed);
    let mut params = build_ablation(variant, components, classes, config.max_len, &mut rng)?;
    let inputs: Vec<(DocInput<T>, usize)> = docs
        .iter()
        .map(|d| Ok((params.prepare(d, bridge, &components.encoders)?, d.label)))
        .collect::<Result<_>>()?;
    let index: Vec<usize> = (0..inputs.len()).collect();
    let mut parts = split_dataset(&index, &[9, 1], config.seed)?.into_iter();
    let train_idx = parts.next().unwrap_or_default();
    let valid_idx = parts.next().unwrap_or_default();
    let valid: Vec<(DocInput<T>, usize)> = valid_idx.iter().map(|&i| inputs[i].clone()).collect();

    let mut adam = Adam::new(config.adam, &params.params());
    let mut report = ClassifierTrainingReport {
        train_loss: Vec::new(),
        valid_loss: Vec::new(),
        valid_accuracy: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        train_accuracy: 0.0,
        train_size: train_idx.len(),
        valid_size: valid_idx.len(),
    };
    let mut best: Option<(f64, f64, SentimentClassifierParams<T>)> = None;
    let mut wait = 0usize;

    for epoch in 0..config.epochs {
        let order = rng.permutation(train_idx.len());
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&DocInput<T>, usize)> = chunk
                .iter()
                .map(|&k| {
                    let (x, y) = &inputs[train_idx[k]];
                    (x, *y)
                })
                .collect();
            let loss = params.batch_gradient(&batch)?;
            epoch_loss += loss.as_f64() * batch.len() as f64;
            clip_global_norm(&mut params.params_mut(), config.clip_norm);
            adam.step(&mut params.params_mut())?;
        }
        let train_loss = epoch_loss / train_idx.len() as f64;
        if !train_loss.is_finite() {
            return Err(ElsaError::InvalidValue(format!("classifier loss diverged at epoch {epoch}")));
        }
        let (valid_loss, valid_acc) = evaluate(&params, &valid)?;
        log::info!("classifier[{variant}] epoch {epoch}: train {train_loss:.4} valid {valid_loss:.4} acc {valid_acc:.3}");
        report.train_loss.push(train_loss);
        report.valid_loss.push(valid_loss);
        report.valid_accuracy.push(valid_acc);

        let improved = best
            .as_ref()
            .is_none_or(|(acc, loss, _)| valid_acc > *acc || (valid_acc == *acc && valid_loss < *loss));
        if improved {
            best = Some((valid_acc, valid_loss, params.clone()));
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
    let (_, _, mut params) = best.expect("at least one epoch ran");
    params.zero_grads();
    let train: Vec<(DocInput<T>, usize)> = train_idx.iter().map(|&i| inputs[i].clone()).collect();
    report.train_accuracy = evaluate(&params, &train)?.1;
    assert_eq!(locked, encoder_bytes(&components.encoders), "encoder parameters changed");
    Ok((params, report))
}

/// Per-side document representations and the joint vector (source side
/// first) for a document in either language.
pub fn represent_document<T: Scalar>(
    doc: &LabeledDocument,
    bridge: &Bridge,
    encoders: &Encoders<T>,
    params: &SentimentClassifierParams<T>,
) -> Result<JointRepresentation<T>> {
    let input = params.prepare(doc, bridge, encoders)?;
    let cache = params.forward(&input)?;
    Ok(JointRepresentation {
        sides: params.sides.iter().map(|s| s.side).zip(cache.sides.into_iter().map(|c| c.doc)).collect(),
        joint: cache.joint,
    })
}

/// Predicted class (lowest id on ties) and class probabilities.
pub fn classify<T: Scalar>(
    doc: &LabeledDocument,
    bridge: &Bridge,
    encoders: &Encoders<T>,
    params: &SentimentClassifierParams<T>,
) -> Result<(usize, Vec<f64>)> {
    let input = params.prepare(doc, bridge, encoders)?;
    let (class, probs) = params.predict(&input)?;
    Ok((class, probs.iter().map(|p| p.as_f64()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docsent::translate::IdentityTranslator;
    use crate::encoder::{EncoderDims, EncoderParams};
    use crate::textprep::{DefaultSegmenter, Language};

    fn docs(n: usize, seed: u64, flip: bool) -> Vec<LabeledDocument> {
        let mut rng = Prng::new(seed);
        let filler = ["t4", "t5", "t6", "t7"];
        (0..n)
            .map(|i| {
                let label = i % 2;
                let signal = if label == 0 { "t2" } else { "t3" };
                let mut words: Vec<&str> = (0..3).map(|_| *rng.choose(&filler)).collect();
                words.insert(rng.below(4), signal);
                let text = format!("{}. {} {}.", words.join(" "), rng.choose(&filler), rng.choose(&filler));
                let y = if flip { 1 - label } else { label };
                LabeledDocument::from_text(format!("d{i}"), text, y, Language::new("en"), &DefaultSegmenter).unwrap()
            })
            .collect()
    }

    fn encoder() -> EncoderParams<f64> {
        let mut e = EncoderParams::random(
            EncoderDims {
                vocab_size: 8,
                embed_dim: 4,
                hidden1: 3,
                hidden2: 3,
                classes: 2,
            },
            &mut Prng::new(7),
        );
        e.freeze();
        e
    }

    fn config() -> ClassifierConfig {
        ClassifierConfig {
            epochs: 60,
            batch_size: 16,
            adam: AdamConfig {
                lr: 0.05,
                ..Default::default()
            },
            patience: 10,
            ..Default::default()
        }
    }

    fn run(flip: bool) -> (SentimentClassifierParams<f64>, ClassifierTrainingReport, f64) {
        let enc = encoder();
        let (en, de) = (Language::new("en"), Language::new("de"));
        let bridge = Bridge {
            oracle: &IdentityTranslator,
            source: &en,
            target: &de,
            segmenter: &DefaultSegmenter,
        };
        let comps = AblationComponents {
            encoders: Encoders {
                source: Some(&enc),
                target: Some(&enc),
            },
            embeddings_source: None,
            embeddings_target: None,
        };
        let (p, r) = train_classifier(&docs(120, 1, flip), &bridge, &comps, Variant::Full, 2, &config()).unwrap();
        let test = docs(60, 2, flip);
        let hits = test
            .iter()
            .filter(|d| classify(d, &bridge, &comps.encoders, &p).unwrap().0 == d.label)
            .count();
        (p, r, hits as f64 / test.len() as f64)
    }

    #[test]
    fn separable_task_is_learned() {
        let (_, report, test_acc) = run(false);
        assert!(report.train_accuracy >= 0.95, "train {}", report.train_accuracy);
        assert!(test_acc >= 0.9, "test {test_acc}");
        assert_eq!(report.train_size + report.valid_size, 120);
        assert_eq!(report.valid_size, 12);
    }

    #[test]
    fn flipped_labels_flip_the_decision() {
        let (_, _, a) = run(false);
        let (_, _, b) = run(true);
        assert!((a - b).abs() <= 0.05, "{a} vs {b}");
    }

    #[test]
    fn same_seed_same_parameters() {
        let (a, _, _) = run(false);
        let (b, _, _) = run(false);
        assert_eq!(a.value_bytes(), b.value_bytes());
    }

    #[test]
    fn identity_oracle_with_one_encoder_duplicates_the_side_vector() {
        let enc = encoder();
        let (en, de) = (Language::new("en"), Language::new("de"));
        let bridge = Bridge {
            oracle: &IdentityTranslator,
            source: &en,
            target: &de,
            segmenter: &DefaultSegmenter,
        };
        let encoders = Encoders {
            source: Some(&enc),
            target: Some(&enc),
        };
        let comps = AblationComponents {
            encoders,
            embeddings_source: None,
            embeddings_target: None,
        };
        let p = build_ablation(Variant::Full, &comps, 2, 8, &mut Prng::new(3)).unwrap();
        let doc = &docs(1, 9, false)[0];
        let r = represent_document(doc, &bridge, &encoders, &p).unwrap();
        let u = enc.u_dim();
        assert_eq!(r.joint[..u], r.joint[u..]);
        assert_eq!(r.sides[0].0, Side::Source);
    }

    #[test]
    fn too_few_or_foreign_documents_rejected() {
        let enc = encoder();
        let (en, de) = (Language::new("en"), Language::new("de"));
        let bridge = Bridge {
            oracle: &IdentityTranslator,
            source: &en,
            target: &de,
            segmenter: &DefaultSegmenter,
        };
        let comps = AblationComponents {
            encoders: Encoders {
                source: Some(&enc),
                target: Some(&enc),
            },
            embeddings_source: None,
            embeddings_target: None,
        };
        assert!(matches!(
            train_classifier(&docs(9, 1, false), &bridge, &comps, Variant::Full, 2, &config()),
            Err(ElsaError::Size(_))
        ));
        let mut d = docs(12, 1, false);
        d[3].language = de.clone();
        assert!(matches!(
            train_classifier(&d, &bridge, &comps, Variant::Full, 2, &config()),
            Err(ElsaError::Data(_))
        ));
    }
}
