use serde::{Deserialize, Serialize};

use super::Param;

/// `w ← w − η g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], learning_rate: f64) {
    assert_eq!(params.len(), grads.len());
    for (w, g) in params.iter_mut().zip(grads) {
        *w -= learning_rate * g;
    }
}

/// `acc ← ρ acc + (1 − ρ) g²`, then `w ← w − η g / (√acc + ε)`.
pub fn rmsprop_step(params: &mut [f64], grads: &[f64], acc: &mut [f64], learning_rate: f64, decay: f64, eps: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), acc.len());
    for ((w, &g), a) in params.iter_mut().zip(grads).zip(acc.iter_mut()) {
        *a = decay * *a + (1.0 - decay) * g * g;
        *w -= learning_rate * g / (a.sqrt() + eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    RmsProp { decay: f64, eps: f64 },
}

impl OptimizerKind {
    pub const DEFAULT_RMSPROP: OptimizerKind = OptimizerKind::RmsProp { decay: 0.9, eps: 1e-8 };
}

/// Optimizer with one squared-gradient accumulator per parameter tensor.
///
/// Accumulators are matched to parameters by position, so the parameter
/// list must be passed in the same order on every step.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    accumulators: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        if let OptimizerKind::RmsProp { decay, .. } = kind {
            assert!(decay > 0.0 && decay < 1.0, "rmsprop decay must lie in (0, 1)");
        }
        Self { kind, learning_rate, accumulators: Vec::new() }
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.accumulators
    }

    pub fn step(&mut self, params: &mut [&mut Param]) {
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    let Param { value, grad } = &mut **p;
                    sgd_step(value.data_mut(), grad.data(), self.learning_rate);
                }
            }
            OptimizerKind::RmsProp { decay, eps } => {
                if self.accumulators.len() != params.len() {
                    self.accumulators = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
                }
                for (p, acc) in params.iter_mut().zip(self.accumulators.iter_mut()) {
                    let Param { value, grad } = &mut **p;
                    rmsprop_step(value.data_mut(), grad.data(), acc, self.learning_rate, decay, eps);
                }
            }
        }
    }
}
