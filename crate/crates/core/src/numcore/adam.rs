use serde::{Deserialize, Serialize};

use crate::error::{ElsaError, Result};
use crate::numcore::{DenseMatrix, ParamTensor, Scalar};

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let betas_ok = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2);
        if !(self.lr > 0.0) || !betas_ok || !(self.eps > 0.0) {
            return Err(ElsaError::Config(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// First/second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: DenseMatrix<T>,
    pub v: DenseMatrix<T>,
    pub step_count: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn for_param(param: &ParamTensor<T>) -> Self {
        let (r, c) = param.shape();
        AdamState {
            m: DenseMatrix::zeros(r, c),
            v: DenseMatrix::zeros(r, c),
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam update. The gradient must already contain any L2
/// term; it is zeroed afterwards.
pub fn adam_step<T: Scalar>(
    param: &mut ParamTensor<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    param.value.check_same_shape(&param.grad)?;
    param.value.check_same_shape(&state.m)?;
    param.value.check_same_shape(&state.v)?;

    state.step_count += 1;
    let t = state.step_count as i32;
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let one = T::one();
    let bc1 = T::of(1.0 - cfg.beta1.powi(t));
    let bc2 = T::of(1.0 - cfg.beta2.powi(t));
    let lr = T::of(cfg.lr);
    let eps = T::of(cfg.eps);

    let values = param.value.as_mut_slice();
    let grads = param.grad.as_mut_slice();
    let ms = state.m.as_mut_slice();
    let vs = state.v.as_mut_slice();
    for i in 0..values.len() {
        let g = grads[i];
        ms[i] = b1 * ms[i] + (one - b1) * g;
        vs[i] = b2 * vs[i] + (one - b2) * g * g;
        let m_hat = ms[i] / bc1;
        let v_hat = vs[i] / bc2;
        values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        grads[i] = T::zero();
    }
    Ok(())
}

/// Adam over a whole parameter list, pairing state by position.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub states: Vec<AdamState<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &[&ParamTensor<T>]) -> Self {
        Adam {
            config,
            states: params.iter().map(|p| AdamState::for_param(p)).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut ParamTensor<T>]) -> Result<()> {
        if params.len() != self.states.len() {
            return Err(ElsaError::Shape(format!(
                "optimizer tracks {} tensors, got {}",
                self.states.len(),
                params.len()
            )));
        }
        for (p, s) in params.iter_mut().zip(self.states.iter_mut()) {
            adam_step(p, s, &self.config)?;
        }
        Ok(())
    }
}
