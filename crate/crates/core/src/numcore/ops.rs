use crate::error::{ElsaError, Result};
use crate::numcore::Scalar;

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(ElsaError::Shape("softmax of an empty vector".into()));
    }
    if logits.iter().any(|x| x.is_nan()) {
        return Err(ElsaError::InvalidValue("NaN logit".into()));
    }
    if logits.iter().any(|x| x.is_infinite()) {
        return Err(ElsaError::InvalidValue("infinite logit".into()));
    }
    Ok(softmax_unchecked(logits))
}

/// Softmax without input validation, for hot loops over finite values.
pub(crate) fn softmax_unchecked<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let mut out: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let z: T = out.iter().copied().sum();
    for o in out.iter_mut() {
        *o /= z;
    }
    out
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Natural log clamped away from zero, for cross-entropy on probabilities.
#[inline]
pub fn safe_ln<T: Scalar>(p: T) -> T {
    p.max(T::min_positive_value()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_logits_give_uniform() {
        assert_eq!(softmax(&[0.0f64, 0.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        // Exact values: 1/(1+e^-1000) rounds to 1.0 and e^-1000/(1+e^-1000)
        // ≈ 5.08e-435, which underflows to 0 in f64.
        let p = softmax(&[1000.0f64, 0.0]).unwrap();
        assert_eq!(p[0], 1.0);
        assert_eq!(p[1], 0.0);
        let p = softmax(&[1000.0f32, 999.0]).unwrap();
        assert!((p[0] - 0.731_058_6).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(softmax::<f64>(&[]), Err(ElsaError::Shape(_))));
        assert!(matches!(
            softmax(&[f64::NAN, 0.0]),
            Err(ElsaError::InvalidValue(_))
        ));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.25f64, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1f64, 0.5, 0.5]), 1);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(0.0f64), 0.5);
    }
}
