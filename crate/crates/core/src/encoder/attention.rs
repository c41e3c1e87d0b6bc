use crate::error::{ElsaError, Result};
use crate::numcore::{dot, softmax_unchecked, Scalar};

/// Scores and pooled vector of one attention application.
#[derive(Debug, Clone, PartialEq)]
pub struct Attended<T> {
    pub scores: Vec<T>,
    pub pooled: Vec<T>,
}

/// `a_i ∝ exp(w·u_i)` over unmasked positions (masked ones get 0) and
/// `v = Σ a_i u_i`. `mask[i] == true` means position `i` takes part.
pub fn word_attention<T: Scalar>(u: &[Vec<T>], weight: &[T], mask: &[bool]) -> Result<Attended<T>> {
    if u.len() != mask.len() {
        return Err(ElsaError::Shape(format!(
            "{} vectors but {} mask entries",
            u.len(),
            mask.len()
        )));
    }
    if let Some(bad) = u.iter().find(|x| x.len() != weight.len()) {
        return Err(ElsaError::Shape(format!(
            "attention weight has width {}, vector has {}",
            weight.len(),
            bad.len()
        )));
    }
    let live: Vec<usize> = (0..u.len()).filter(|&i| mask[i]).collect();
    if live.is_empty() {
        return Err(ElsaError::Degenerate("every position is masked".into()));
    }
    let logits: Vec<T> = live.iter().map(|&i| dot(weight, &u[i])).collect();
    let probs = softmax_unchecked(&logits);
    let mut scores = vec![T::zero(); u.len()];
    let mut pooled = vec![T::zero(); weight.len()];
    for (&i, &p) in live.iter().zip(&probs) {
        scores[i] = p;
        for (o, &x) in pooled.iter_mut().zip(&u[i]) {
            *o += p * x;
        }
    }
    Ok(Attended { scores, pooled })
}

/// Unmasked attention pooling.
pub fn attention_pool<T: Scalar>(u: &[Vec<T>], weight: &[T]) -> Result<Attended<T>> {
    word_attention(u, weight, &vec![true; u.len()])
}

/// Backward pass of attention pooling.
///
/// Given `d_pooled`, accumulates into `d_weight` and returns the gradient
/// for each input vector. Masked positions (score 0) receive zero.
pub fn attention_backward<T: Scalar>(
    u: &[Vec<T>],
    weight: &[T],
    scores: &[T],
    d_pooled: &[T],
    d_weight: &mut [T],
) -> Vec<Vec<T>> {
    // da_i = d_pooled · u_i ; ds_i = a_i (da_i − Σ_j a_j da_j)
    let da: Vec<T> = u.iter().map(|ui| dot(d_pooled, ui)).collect();
    let mean: T = scores.iter().zip(&da).map(|(&a, &d)| a * d).sum();
    let mut du = Vec::with_capacity(u.len());
    for (i, ui) in u.iter().enumerate() {
        let a = scores[i];
        let ds = a * (da[i] - mean);
        for (dw, &x) in d_weight.iter_mut().zip(ui) {
            *dw += ds * x;
        }
        du.push(
            d_pooled
                .iter()
                .zip(weight)
                .map(|(&dp, &w)| a * dp + ds * w)
                .collect(),
        );
    }
    du
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token() {
        let u = vec![vec![1.0f64, -2.0]];
        let r = word_attention(&u, &[0.3, 0.4], &[true]).unwrap();
        assert_eq!(r.scores, vec![1.0]);
        assert_eq!(r.pooled, u[0]);
    }

    #[test]
    fn zero_weight_is_uniform_mean_over_unmasked() {
        let u = vec![vec![1.0f64, 0.0], vec![3.0, 2.0], vec![100.0, 100.0]];
        let r = word_attention(&u, &[0.0, 0.0], &[true, true, false]).unwrap();
        assert_eq!(r.scores, vec![0.5, 0.5, 0.0]);
        assert_eq!(r.pooled, vec![2.0, 1.0]);
    }

    #[test]
    fn hand_softmax_values() {
        // w·u = (1, 2, 3) with w = [1].
        let u = vec![vec![1.0f64], vec![2.0], vec![3.0]];
        let r = attention_pool(&u, &[1.0]).unwrap();
        let z = 1f64.exp() + 2f64.exp() + 3f64.exp();
        let expected = [1f64.exp() / z, 2f64.exp() / z, 3f64.exp() / z];
        for (a, e) in r.scores.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
        assert!((r.scores[0] - 0.0900).abs() < 5e-5);
        assert!((r.scores[1] - 0.2447).abs() < 5e-5);
        assert!((r.scores[2] - 0.6652).abs() < 5e-5);
    }

    #[test]
    fn all_masked_is_degenerate() {
        let u = vec![vec![1.0f64]];
        assert!(matches!(
            word_attention(&u, &[1.0], &[false]),
            Err(ElsaError::Degenerate(_))
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let u = vec![vec![0.2f64, -0.5], vec![0.9, 0.1], vec![-0.3, 0.4]];
        let w = vec![0.7, -1.1];
        let g = vec![0.3, -0.8];
        let loss = |u: &[Vec<f64>], w: &[f64]| dot(&attention_pool(u, w).unwrap().pooled, &g);
        let r = attention_pool(&u, &w).unwrap();
        let mut dw = vec![0.0; 2];
        let du = attention_backward(&u, &w, &r.scores, &g, &mut dw);
        let h = 1e-6;
        for k in 0..2 {
            let mut wp = w.clone();
            wp[k] += h;
            let mut wm = w.clone();
            wm[k] -= h;
            let num = (loss(&u, &wp) - loss(&u, &wm)) / (2.0 * h);
            assert!((num - dw[k]).abs() < 1e-8);
        }
        for i in 0..3 {
            for k in 0..2 {
                let mut up = u.clone();
                up[i][k] += h;
                let mut um = u.clone();
                um[i][k] -= h;
                let num = (loss(&up, &w) - loss(&um, &w)) / (2.0 * h);
                assert!((num - du[i][k]).abs() < 1e-8);
            }
        }
    }
}
