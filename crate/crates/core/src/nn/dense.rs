use rand::Rng;

use super::tensor::gemm;
use super::{glorot_uniform, ActivationKind, NnError, Param, Tensor};

/// Fully connected layer `a = f(x·W + b)` with `W` stored as `[in × out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Param,
    pub bias: Param,
    pub activation: ActivationKind,
    cache: Option<DenseCache>,
}

#[derive(Debug, Clone, PartialEq)]
struct DenseCache {
    input: Tensor,
    z: Tensor,
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: ActivationKind, rng: &mut R) -> Self {
        let weights = glorot_uniform(&[inputs, outputs], inputs, outputs, rng);
        Self::from_params(weights, Tensor::zeros(&[outputs]), activation).expect("consistent shapes")
    }

    pub fn from_params(weights: Tensor, bias: Tensor, activation: ActivationKind) -> Result<Self, NnError> {
        if weights.ndim() != 2 {
            return Err(NnError::InvalidShape(format!("dense weights must be 2-D, got {:?}", weights.shape())));
        }
        bias.expect_shape(&[weights.shape()[1]])?;
        Ok(Self { weights: Param::new(weights), bias: Param::new(bias), activation, cache: None })
    }

    pub fn inputs(&self) -> usize {
        self.weights.value.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.value.shape()[1]
    }

    /// Accepts `[B × in]`, or any `[B, ...]` whose trailing size is `in`.
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let (n_in, n_out) = (self.inputs(), self.outputs());
        if x.sample_len() != n_in || x.ndim() < 2 {
            return Err(NnError::ShapeMismatch { expected: vec![x.batch(), n_in], got: x.shape().to_vec() });
        }
        let batch = x.batch();
        let mut z = vec![0.0; batch * n_out];
        for row in z.chunks_exact_mut(n_out) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(batch, n_in, n_out, 1.0, x.data(), false, self.weights.value.data(), false, 1.0, &mut z);
        let z = Tensor::new(vec![batch, n_out], z)?;
        let out = z.map(|v| self.activation.apply(v));
        self.cache = Some(DenseCache { input: x.clone(), z });
        Ok(out)
    }

    /// Writes `∂J/∂W`, `∂J/∂b` into the parameter gradients and returns `∂J/∂x`.
    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        self.backward_inner(grad, true).map(|g| g.expect("input gradient requested"))
    }

    pub(crate) fn backward_inner(&mut self, grad: &Tensor, need_input: bool) -> Result<Option<Tensor>, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache("dense"))?;
        grad.expect_shape(cache.z.shape())?;
        let (n_in, n_out) = (self.inputs(), self.outputs());
        let batch = cache.z.batch();
        let act = self.activation;
        let delta = cache.z.zip_map(grad, |z, g| g * act.derivative(z))?;

        let dw = self.weights.grad.data_mut();
        gemm(n_in, batch, n_out, 1.0, cache.input.data(), true, delta.data(), false, 0.0, dw);
        let db = self.bias.grad.data_mut();
        db.iter_mut().for_each(|v| *v = 0.0);
        for row in delta.data().chunks_exact(n_out) {
            db.iter_mut().zip(row).for_each(|(b, d)| *b += d);
        }
        if !need_input {
            return Ok(None);
        }
        let mut dx = vec![0.0; batch * n_in];
        gemm(batch, n_out, n_in, 1.0, delta.data(), false, self.weights.value.data(), true, 0.0, &mut dx);
        Ok(Some(Tensor::new(cache.input.shape().to_vec(), dx)?))
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weights, &mut self.bias]
    }
}
