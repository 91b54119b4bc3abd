use serde::{Deserialize, Serialize};

use crate::mdp::argmax;
use crate::nn::{NnError, Tensor};

/// `y = r` on terminal transitions, else `r + γ·max_a q′(s′, a)`.
pub fn dqn_target(reward: f64, next_q_target: &[f64], terminal: bool, gamma: f64) -> f64 {
    if terminal {
        return reward;
    }
    let best = next_q_target.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    reward + gamma * best
}

/// The policy network picks `a* = argmax q(s′, ·)` (lowest index on ties);
/// the target network scores it: `y = r + γ·q′(s′, a*)`.
pub fn double_dqn_target(reward: f64, next_q_policy: &[f64], next_q_target: &[f64], terminal: bool, gamma: f64) -> f64 {
    assert_eq!(next_q_policy.len(), next_q_target.len());
    if terminal {
        return reward;
    }
    reward + gamma * next_q_target[argmax(next_q_policy)]
}

/// How the value and advantage streams are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// `q_a = v + A_a`
    #[default]
    Sum,
    /// `q_a = v + A_a − mean(A)`
    MeanSubtract,
}

impl Aggregation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Aggregation::Sum => 0,
            Aggregation::MeanSubtract => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Aggregation::Sum),
            1 => Some(Aggregation::MeanSubtract),
            _ => None,
        }
    }
}

/// Combines `v: [B × 1]` and `adv: [B × A]` into `q: [B × A]`.
pub fn dueling_aggregate(v: &Tensor, adv: &Tensor, mode: Aggregation) -> Result<Tensor, NnError> {
    let (batch, n) = (adv.batch(), adv.sample_len());
    v.expect_shape(&[batch, 1])?;
    let mut q = Vec::with_capacity(batch * n);
    for (b, row) in adv.data().chunks_exact(n).enumerate() {
        let shift = match mode {
            Aggregation::Sum => 0.0,
            Aggregation::MeanSubtract => row.iter().sum::<f64>() / n as f64,
        };
        q.extend(row.iter().map(|a| v.data()[b] + a - shift));
    }
    Tensor::new(vec![batch, n], q)
}

/// Splits `∂J/∂q` into `(∂J/∂v, ∂J/∂A)`.
pub fn dueling_backward(grad_q: &Tensor, mode: Aggregation) -> (Tensor, Tensor) {
    let (batch, n) = (grad_q.batch(), grad_q.sample_len());
    let mut dv = Vec::with_capacity(batch);
    let mut da = Vec::with_capacity(batch * n);
    for row in grad_q.data().chunks_exact(n) {
        let total: f64 = row.iter().sum();
        dv.push(total);
        let shift = match mode {
            Aggregation::Sum => 0.0,
            Aggregation::MeanSubtract => total / n as f64,
        };
        da.extend(row.iter().map(|g| g - shift));
    }
    (
        Tensor::new(vec![batch, 1], dv).expect("one value per sample"),
        Tensor::new(vec![batch, n], da).expect("same shape as grad"),
    )
}
