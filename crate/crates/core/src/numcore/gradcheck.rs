//! Central-difference gradient verification.

use crate::error::{ElsaError, Result};
use crate::numcore::{ParamSet, Prng, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coords_checked: usize,
    /// Worst relative error per parameter tensor, in parameter order.
    pub per_param: Vec<(String, f64)>,
}

/// Which coordinates to probe.
#[derive(Debug, Clone, Copy)]
pub enum Coverage {
    All,
    /// At most `n` coordinates per tensor, chosen by a seeded generator.
    Sample { per_tensor: usize, seed: u64 },
}

/// Compares the gradients currently stored in `model` against central
/// differences of `loss_fn`.
///
/// The relative error of one coordinate is
/// `|a − n| / max(|a|, |n|, 1e-8)`; the report carries the maximum.
pub fn grad_check<T, P, F>(
    model: &mut P,
    mut loss_fn: F,
    epsilon: f64,
    coverage: Coverage,
) -> Result<GradCheckReport>
where
    T: Scalar,
    P: ParamSet<T>,
    F: FnMut(&P) -> Result<T>,
{
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(ElsaError::Range(format!(
            "epsilon {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    let analytic: Vec<Vec<f64>> = model
        .params()
        .iter()
        .map(|p| p.grad.as_slice().iter().map(|g| g.as_f64()).collect())
        .collect();
    let names: Vec<String> = model.params().iter().map(|p| p.name.clone()).collect();

    let mut rng = match coverage {
        Coverage::Sample { seed, .. } => Some(Prng::new(seed)),
        Coverage::All => None,
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coords_checked: 0,
        per_param: Vec::new(),
    };

    for (pi, grads) in analytic.iter().enumerate() {
        let coords: Vec<usize> = match (&coverage, rng.as_mut()) {
            (Coverage::Sample { per_tensor, .. }, Some(r)) if *per_tensor < grads.len() => {
                let mut perm = r.permutation(grads.len());
                perm.truncate(*per_tensor);
                perm.sort_unstable();
                perm
            }
            _ => (0..grads.len()).collect(),
        };
        let mut worst_here = 0.0f64;
        for ci in coords {
            let original = model.params()[pi].value.as_slice()[ci];
            let plus = original + T::of(epsilon);
            let minus = original - T::of(epsilon);

            model.params_mut()[pi].value.as_mut_slice()[ci] = plus;
            let lp = loss_fn(model);
            model.params_mut()[pi].value.as_mut_slice()[ci] = minus;
            let lm = loss_fn(model);
            model.params_mut()[pi].value.as_mut_slice()[ci] = original;
            let (lp, lm) = (lp?.as_f64(), lm?.as_f64());
            if !lp.is_finite() || !lm.is_finite() {
                return Err(ElsaError::InvalidValue(format!(
                    "non-finite loss while probing {}[{ci}]",
                    names[pi]
                )));
            }
            // Use the actually representable step so f32 checks stay honest.
            let h = (plus - minus).as_f64();
            let numeric = (lp - lm) / h;
            let a = grads[ci];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.coords_checked += 1;
            worst_here = worst_here.max(rel);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = names[pi].clone();
                report.worst_index = ci;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
        report.per_param.push((names[pi].clone(), worst_here));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{DenseMatrix, ParamTensor};

    fn quadratic_model(xs: &[f64]) -> Vec<ParamTensor<f64>> {
        let mut p = ParamTensor::new(
            "x",
            DenseMatrix::from_vec(1, xs.len(), xs.to_vec()).unwrap(),
        );
        p.grad = p.value.clone();
        vec![p]
    }

    #[allow(clippy::ptr_arg)]
    fn half_norm_sq(m: &Vec<ParamTensor<f64>>) -> Result<f64> {
        Ok(0.5 * m[0].value.sum_squares())
    }

    #[test]
    fn quadratic_is_exact() {
        let mut m = quadratic_model(&[0.3, -1.7, 2.5, 0.01]);
        let r = grad_check(&mut m, half_norm_sq, 1e-5, Coverage::All).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        assert_eq!(r.coords_checked, 4);
        // Values restored.
        assert_eq!(m[0].value.as_slice(), &[0.3, -1.7, 2.5, 0.01]);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let mut m = quadratic_model(&[0.3, -1.7, 2.5]);
        m[0].grad.as_mut_slice()[1] *= 2.0;
        let r = grad_check(&mut m, half_norm_sq, 1e-5, Coverage::All).unwrap();
        assert!(r.max_rel_error > 1e-1);
        assert_eq!(r.worst_index, 1);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut m = quadratic_model(&[1.0]);
        let r = grad_check(&mut m, |_| Ok(f64::NAN), 1e-5, Coverage::All);
        assert!(matches!(r, Err(ElsaError::InvalidValue(_))));
    }

    #[test]
    fn epsilon_out_of_range() {
        let mut m = quadratic_model(&[1.0]);
        assert!(grad_check(&mut m, half_norm_sq, 1e-1, Coverage::All).is_err());
    }

    #[test]
    fn sampling_limits_coordinates() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let mut m = quadratic_model(&xs);
        let r = grad_check(
            &mut m,
            half_norm_sq,
            1e-5,
            Coverage::Sample {
                per_tensor: 7,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(r.coords_checked, 7);
    }
}
