use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::mdp::{DiscountFactor, EpsilonSchedule, QTable};
use crate::tabular::{q_learning_train, sarsa_train, GridEnv, GridWorld, Rollout, TdParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliffAlgo {
    Sarsa,
    QLearning,
}

impl CliffAlgo {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sarsa" => Some(CliffAlgo::Sarsa),
            "qlearning" | "q-learning" => Some(CliffAlgo::QLearning),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CliffParams {
    pub algo: CliffAlgo,
    pub alpha: f64,
    pub gamma: f64,
    /// ε at the first episode.
    pub epsilon: f64,
    /// ε reached at the last episode; equal to `epsilon` for a fixed ε.
    pub epsilon_final: f64,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for CliffParams {
    fn default() -> Self {
        Self { algo: CliffAlgo::QLearning, alpha: 0.5, gamma: 1.0, epsilon: 0.1, epsilon_final: 0.1, episodes: 500, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct CliffReport {
    pub q: QTable,
    pub rollout: Rollout,
    /// The grid with the greedy path drawn in.
    pub picture: String,
}

/// Trains on the 4×12 cliff walk and rolls out the greedy policy.
pub fn cmd_cliff(params: &CliffParams) -> Result<CliffReport, HarnessError> {
    let bad = |e: &dyn std::fmt::Display| HarnessError::InvalidConfig(e.to_string());
    let gamma = DiscountFactor::new(params.gamma).map_err(|e| bad(&e))?;
    let epsilon = EpsilonSchedule::new(params.epsilon, params.epsilon_final, params.episodes.max(1) as u64)
        .map_err(|e| bad(&e))?;
    let td = TdParams::new(params.alpha, gamma, epsilon, params.episodes).map_err(|e| bad(&e))?;
    let world = GridWorld::cliff_walking();
    let mut env = GridEnv::new(world.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let q = match params.algo {
        CliffAlgo::Sarsa => sarsa_train(&mut env, &td, &mut rng),
        CliffAlgo::QLearning => q_learning_train(&mut env, &td, &mut rng),
    };
    let rollout = world.greedy_rollout(&q, world.n_cells() * 4);
    let picture = world.render_path(&rollout.path);
    Ok(CliffReport { q, rollout, picture })
}
