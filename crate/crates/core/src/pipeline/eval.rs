use serde::{Deserialize, Serialize};

use crate::error::{ElsaError, Result};
use crate::numcore::Prng;

/// χ² critical value, one degree of freedom, 5% level.
pub const CHI2_1DF_5PCT: f64 = 3.841;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub gold_counts: Vec<usize>,
    pub predicted_counts: Vec<usize>,
}

/// Accuracy and confusion matrix. The class count is the larger of
/// `classes` and one past the largest id seen.
pub fn evaluate(predictions: &[usize], gold: &[usize], classes: usize) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(ElsaError::Shape(format!(
            "{} predictions vs {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(ElsaError::Size("nothing to evaluate".into()));
    }
    let c = predictions
        .iter()
        .chain(gold)
        .map(|&x| x + 1)
        .max()
        .unwrap_or(0)
        .max(classes);
    let mut confusion = vec![vec![0usize; c]; c];
    for (&p, &g) in predictions.iter().zip(gold) {
        confusion[g][p] += 1;
    }
    let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
    Ok(EvalReport {
        n: gold.len(),
        accuracy: correct as f64 / gold.len() as f64,
        gold_counts: confusion.iter().map(|row| row.iter().sum()).collect(),
        predicted_counts: (0..c).map(|j| confusion.iter().map(|row| row[j]).sum()).collect(),
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    pub statistic: f64,
    /// A right, B wrong.
    pub b: usize,
    /// A wrong, B right.
    pub c: usize,
    pub significant: bool,
}

/// Continuity-corrected McNemar test of two classifiers on the same items.
pub fn mcnemar(pred_a: &[usize], pred_b: &[usize], gold: &[usize]) -> Result<McNemar> {
    if pred_a.len() != gold.len() || pred_b.len() != gold.len() {
        return Err(ElsaError::Shape(format!(
            "lengths {}, {} and {} differ",
            pred_a.len(),
            pred_b.len(),
            gold.len()
        )));
    }
    let (mut b, mut c) = (0usize, 0usize);
    for ((&a, &p), &g) in pred_a.iter().zip(pred_b).zip(gold) {
        match (a == g, p == g) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_counts(b, c))
}

pub fn mcnemar_counts(b: usize, c: usize) -> McNemar {
    let statistic = if b + c == 0 {
        0.0
    } else {
        let d = (b as f64 - c as f64).abs() - 1.0;
        d * d / (b + c) as f64
    };
    McNemar {
        statistic,
        b,
        c,
        significant: statistic > CHI2_1DF_5PCT,
    }
}

/// Seeded sample of `round(fraction · n)` items without replacement, kept in
/// corpus order. Samples of one seed are nested across fractions.
pub fn subsample<X: Clone>(corpus: &[X], fraction: f64, seed: u64) -> Result<Vec<X>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ElsaError::Range(format!("fraction {fraction} outside (0, 1]")));
    }
    if corpus.is_empty() {
        return Err(ElsaError::Size("cannot subsample an empty corpus".into()));
    }
    if fraction == 1.0 {
        return Ok(corpus.to_vec());
    }
    let k = (fraction * corpus.len() as f64).round() as usize;
    let mut keep = Prng::new(seed).permutation(corpus.len());
    keep.truncate(k);
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| corpus[i].clone()).collect())
}
