//! Dense kernels, the deterministic generator, parameter bookkeeping, Adam,
//! and the finite-difference gradient verifier.

mod adam;
mod gradcheck;
mod matrix;
mod ops;
mod param;
mod prng;
mod scalar;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use gradcheck::{grad_check, Coverage, GradCheckReport};
pub use matrix::{dot, DenseMatrix};
pub use ops::{argmax, safe_ln, sigmoid, softmax};
pub(crate) use ops::softmax_unchecked;
pub use param::{clip_global_norm, ParamSet, ParamTensor};
pub use prng::Prng;
pub use scalar::Scalar;
