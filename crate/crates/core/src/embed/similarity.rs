use crate::error::{ElsaError, Result};
use crate::numcore::{dot, Scalar};

/// `u·v / (‖u‖‖v‖)`, clamped to [-1, 1].
pub fn cosine_similarity<T: Scalar>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(ElsaError::Shape(format!("lengths {} and {}", u.len(), v.len())));
    }
    let nu = dot(u, u).as_f64().sqrt();
    let nv = dot(v, v).as_f64().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(ElsaError::Degenerate("cosine of a zero vector".into()));
    }
    Ok((dot(u, v).as_f64() / (nu * nv)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        assert!((cosine_similarity(&[1.0f64, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0f64, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert!(matches!(
            cosine_similarity(&[0.0f64, 0.0], &[1.0, 0.0]),
            Err(ElsaError::Degenerate(_))
        ));
    }

    proptest! {
        #[test]
        fn symmetric_and_scale_invariant(
            u in prop::collection::vec(-10.0f64..10.0, 4),
            v in prop::collection::vec(-10.0f64..10.0, 4),
            alpha in 0.01f64..100.0,
        ) {
            prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
            let a = cosine_similarity(&u, &v).unwrap();
            let b = cosine_similarity(&v, &u).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            let su: Vec<f64> = u.iter().map(|x| x * alpha).collect();
            prop_assert!((cosine_similarity(&su, &v).unwrap() - a).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&a));
        }
    }
}
