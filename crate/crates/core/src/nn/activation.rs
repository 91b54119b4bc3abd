use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl ActivationKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Identity => x,
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            ActivationKind::Tanh => x.tanh(),
        }
    }

    /// Derivative at `x`; relu'(0) is taken as 0.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ActivationKind::Identity => 1.0,
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Sigmoid => {
                let s = self.apply(x);
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            ActivationKind::Identity => 0,
            ActivationKind::Relu => 1,
            ActivationKind::Sigmoid => 2,
            ActivationKind::Tanh => 3,
        }
    }

    pub(crate) fn from_code(code: u64) -> Option<Self> {
        Some(match code {
            0 => ActivationKind::Identity,
            1 => ActivationKind::Relu,
            2 => ActivationKind::Sigmoid,
            3 => ActivationKind::Tanh,
            _ => return None,
        })
    }
}

pub fn activation_forward(x: &Tensor, kind: ActivationKind) -> Tensor {
    x.map(|v| kind.apply(v))
}

/// Elementwise derivative of the activation at `x`.
pub fn activation_grad(x: &Tensor, kind: ActivationKind) -> Tensor {
    x.map(|v| kind.derivative(v))
}

/// Standalone elementwise activation layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationLayer {
    pub kind: ActivationKind,
    input: Option<Tensor>,
}

impl ActivationLayer {
    pub fn new(kind: ActivationKind) -> Self {
        Self { kind, input: None }
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.input = Some(x.clone());
        activation_forward(x, self.kind)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let x = self.input.as_ref().ok_or(NnError::NoForwardCache("activation"))?;
        let kind = self.kind;
        x.zip_map(grad, |xv, g| g * kind.derivative(xv))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::finite_difference_grad;

    #[test]
    fn known_values() {
        assert_eq!(ActivationKind::Relu.apply(-3.0), 0.0);
        assert_eq!(ActivationKind::Relu.apply(2.0), 2.0);
        assert_eq!(ActivationKind::Sigmoid.apply(0.0), 0.5);
        assert_eq!(ActivationKind::Tanh.apply(0.0), 0.0);
        assert_eq!(ActivationKind::Relu.derivative(0.0), 0.0);
    }

    #[test]
    fn sigmoid_derivative_against_central_difference() {
        let x = Tensor::from_vec(vec![0.0]);
        let fd = finite_difference_grad(|t| ActivationKind::Sigmoid.apply(t.data()[0]), &x, 1e-5);
        assert_eq!(ActivationKind::Sigmoid.derivative(0.0), 0.25);
        assert!((fd.data()[0] - 0.25).abs() < 1e-8);
    }

    #[test]
    fn backward_without_forward_fails() {
        let mut l = ActivationLayer::new(ActivationKind::Tanh);
        assert!(l.backward(&Tensor::from_vec(vec![1.0])).is_err());
    }

    #[test]
    fn codes_round_trip() {
        for k in [ActivationKind::Identity, ActivationKind::Relu, ActivationKind::Sigmoid, ActivationKind::Tanh] {
            assert_eq!(ActivationKind::from_code(k.code()), Some(k));
        }
        assert_eq!(ActivationKind::from_code(9), None);
    }
}
