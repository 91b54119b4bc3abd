//! Minimal f64 neural-network kernel: tensors, layers, losses, optimizers
//! and a binary checkpoint format.

mod activation;
mod batchnorm;
pub mod checkpoint;
mod conv;
mod dense;
pub mod gradcheck;
mod loss;
mod network;
mod optim;
mod pool;
mod tensor;

use rand::Rng;
use thiserror::Error;

pub use activation::{activation_forward, activation_grad, ActivationKind, ActivationLayer};
pub use batchnorm::{BatchNormLayer, DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM};
pub use conv::{conv_output_dim, ConvLayer};
pub use dense::DenseLayer;
pub use loss::mse_loss;
pub use network::{FlattenLayer, Layer, Sequential};
pub use optim::{rmsprop_step, sgd_step, Optimizer, OptimizerKind};
pub use pool::{PoolLayer, PoolMode};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("{0}: backward called before forward")]
    NoForwardCache(&'static str),
    #[error("training-mode batch normalization needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("channel mismatch: layer expects {expected}, input has {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("{layer} cannot fit a {height}x{width} input")]
    InputTooSmall { layer: String, height: usize, width: usize },
    #[error("{layer}: {source}")]
    Layer { layer: String, source: Box<NnError> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Forward-pass mode; only batch normalization distinguishes them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A trainable tensor and its accumulated gradient (same shape).
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }
}

/// Glorot uniform: `U(−r, r)` with `r = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-r..=r)).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}
