use crate::error::{ElsaError, Result};
use crate::numcore::{DenseMatrix, Prng, Scalar};

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub value: DenseMatrix<T>,
    pub grad: DenseMatrix<T>,
    /// Weight of the `½·l2·‖value‖²` penalty.
    pub l2_coeff: f64,
}

impl<T: Scalar> ParamTensor<T> {
    pub fn new(name: impl Into<String>, value: DenseMatrix<T>) -> Self {
        let (r, c) = value.shape();
        ParamTensor {
            name: name.into(),
            value,
            grad: DenseMatrix::zeros(r, c),
            l2_coeff: 0.0,
        }
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(name, DenseMatrix::zeros(rows, cols))
    }

    /// Glorot-uniform initialization over `[-a, a]`, `a = √(6/(fan_in+fan_out))`.
    pub fn glorot(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut Prng,
    ) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let value = DenseMatrix::from_fn(rows, cols, |_, _| rng.uniform(-a, a));
        Self::new(name, value)
    }

    pub fn with_l2(mut self, coeff: f64) -> Self {
        assert!(coeff >= 0.0, "negative l2 coefficient");
        self.l2_coeff = coeff;
        self
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// `½·l2·‖value‖²`
    pub fn l2_penalty(&self) -> T {
        if self.l2_coeff == 0.0 {
            return T::zero();
        }
        T::of(0.5 * self.l2_coeff) * self.value.sum_squares()
    }

    /// Adds `l2·value` to the gradient.
    pub fn add_l2_grad(&mut self) {
        if self.l2_coeff == 0.0 {
            return;
        }
        let k = T::of(self.l2_coeff);
        for (g, &v) in self.grad.as_mut_slice().iter_mut().zip(self.value.as_slice()) {
            *g += k * v;
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if self.value.shape() != (rows, cols) || self.grad.shape() != (rows, cols) {
            return Err(ElsaError::Shape(format!(
                "{}: expected {rows}x{cols}, found {:?}",
                self.name,
                self.value.shape()
            )));
        }
        Ok(())
    }
}

/// A model exposing its parameters in a fixed order.
///
/// The order is part of the contract: optimizers pair state with parameters
/// by position and checkpoints list tensors in this order.
pub trait ParamSet<T: Scalar> {
    fn params(&self) -> Vec<&ParamTensor<T>>;
    fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Raw little-endian bytes of every value, in parameter order.
    fn value_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for p in self.params() {
            for &v in p.value.as_slice() {
                v.write_le(&mut out);
            }
        }
        out
    }
}

impl<T: Scalar> ParamSet<T> for Vec<ParamTensor<T>> {
    fn params(&self) -> Vec<&ParamTensor<T>> {
        self.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        self.iter_mut().collect()
    }
}

/// Scales all gradients so their joint L2 norm is at most `threshold`.
/// A threshold of 0 disables clipping. Returns the pre-clip norm.
pub fn clip_global_norm<T: Scalar>(params: &mut [&mut ParamTensor<T>], threshold: f64) -> f64 {
    let norm = params
        .iter()
        .map(|p| p.grad.sum_squares().as_f64())
        .sum::<f64>()
        .sqrt();
    if threshold > 0.0 && norm > threshold {
        let k = T::of(threshold / norm);
        for p in params.iter_mut() {
            p.grad.scale(k);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_bounds_and_reproducibility() {
        let a = ParamTensor::<f64>::glorot("w", 10, 6, 6, 10, &mut Prng::new(5));
        let b = ParamTensor::<f64>::glorot("w", 10, 6, 6, 10, &mut Prng::new(5));
        assert_eq!(a, b);
        let bound = (6.0f64 / 16.0).sqrt();
        assert!(a.value.as_slice().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn l2_grad_matches_penalty_derivative() {
        let mut p = ParamTensor::new(
            "e",
            DenseMatrix::from_vec(1, 2, vec![2.0f64, -3.0]).unwrap(),
        )
        .with_l2(0.5);
        assert!((p.l2_penalty() - 0.25 * 13.0).abs() < 1e-15);
        p.add_l2_grad();
        assert_eq!(p.grad.as_slice(), &[1.0, -1.5]);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut a = ParamTensor::<f64>::zeros("a", 1, 2);
        let mut b = ParamTensor::<f64>::zeros("b", 1, 1);
        a.grad.as_mut_slice().copy_from_slice(&[3.0, 0.0]);
        b.grad.as_mut_slice()[0] = 4.0;
        let norm = clip_global_norm(&mut [&mut a, &mut b], 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let after = (a.grad.sum_squares() + b.grad.sum_squares()).sqrt();
        assert!((after - 1.0).abs() < 1e-12);

        let norm = clip_global_norm(&mut [&mut a, &mut b], 0.0);
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
