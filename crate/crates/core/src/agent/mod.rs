//! Deep Q-learning agents: DQN, Double DQN, dueling heads and prioritized
//! replay, sharing one training loop.

mod compact;
mod dqn;
mod network;
mod targets;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::EpsilonSchedule;
use crate::nn::{NnError, OptimizerKind};
use crate::replay::{PerParams, ReplayError};

pub use compact::CompactObs;
pub use dqn::{DqnAgent, TrainOutcome, TrainStats};
pub use network::{build_network, NetPreset, NetworkSpec, QHead, QNetwork};
pub use targets::{double_dqn_target, dqn_target, dueling_aggregate, dueling_backward, Aggregation};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("observation shape {got:?} does not match {expected:?}")]
    ObservationShape { expected: Vec<usize>, got: Vec<usize> },
    #[error("action {action} out of range for {n_actions} actions")]
    ActionOutOfRange { action: usize, n_actions: usize },
    #[error("non-finite loss {loss} at training step {step}")]
    NonFiniteLoss { loss: f64, step: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "dqn")]
    Dqn,
    #[serde(rename = "double")]
    Double,
    #[serde(rename = "dueling")]
    Dueling,
    #[serde(rename = "dqn-per")]
    DqnPer,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Dqn, Algorithm::Double, Algorithm::Dueling, Algorithm::DqnPer];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Double => "double",
            Algorithm::Dueling => "dueling",
            Algorithm::DqnPer => "dqn-per",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dqn" => Some(Algorithm::Dqn),
            "double" => Some(Algorithm::Double),
            "dueling" => Some(Algorithm::Dueling),
            "dqn-per" | "dqn_per" => Some(Algorithm::DqnPer),
            _ => None,
        }
    }

    pub fn prioritized(self) -> bool {
        self == Algorithm::DqnPer
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub use_batch_norm: bool,
    pub aggregation: Aggregation,
    pub network: NetPreset,
    pub gamma: f64,
    pub batch_size: usize,
    pub target_sync_steps: u64,
    pub epsilon: EpsilonSchedule,
    pub learning_rate: f64,
    pub warmup_size: usize,
    pub memory_capacity: usize,
    pub per: PerParams,
    pub optimizer: OptimizerKind,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dqn,
            use_batch_norm: false,
            aggregation: Aggregation::Sum,
            network: NetPreset::Paper,
            gamma: 0.99,
            batch_size: 128,
            target_sync_steps: 1000,
            epsilon: EpsilonSchedule::new(0.1, 1e-4, 100_000).expect("valid schedule"),
            learning_rate: 2e-5,
            warmup_size: 1000,
            memory_capacity: 300_000,
            per: PerParams::default(),
            optimizer: OptimizerKind::DEFAULT_RMSPROP,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.target_sync_steps == 0 {
            return bad("target_sync_steps must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.warmup_size < self.batch_size {
            return bad(format!("warmup_size {} is below batch_size {}", self.warmup_size, self.batch_size));
        }
        if self.memory_capacity < self.warmup_size {
            return bad(format!("memory_capacity {} is below warmup_size {}", self.memory_capacity, self.warmup_size));
        }
        if self.use_batch_norm && self.batch_size < 2 {
            return bad("batch normalization needs batch_size >= 2".into());
        }
        if self.algorithm.prioritized() {
            self.per.validate()?;
        }
        if let OptimizerKind::RmsProp { decay, eps } = self.optimizer {
            if !(decay > 0.0 && decay < 1.0 && eps >= 0.0) {
                return bad(format!("rmsprop decay must lie in (0, 1), got {decay}"));
            }
        }
        Ok(())
    }

    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec {
            preset: self.network,
            dueling: self.algorithm == Algorithm::Dueling,
            aggregation: self.aggregation,
            batch_norm: self.use_batch_norm,
        }
    }
}
