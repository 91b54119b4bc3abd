//! Tabular learners: Sarsa, Q-learning, Monte Carlo and TD(0) prediction,
//! plus the cliff-walking gridworld.

mod control;
mod gridworld;
mod prediction;

use rand::Rng;
use thiserror::Error;

pub use control::{q_learning_train, q_learning_traced, sarsa_train, sarsa_traced, MdpEnv, StartRule, TdParams, TdUpdate};
pub use gridworld::{Cell, GridEnv, GridWorld, Move, Rollout};
pub use prediction::{mc_value_estimate, td0_value_update, Trajectory, VisitCounters, VisitMode};

#[derive(Debug, Error, PartialEq)]
pub enum TabularError {
    #[error("cell ({row}, {col}) lies outside the grid")]
    OutOfGrid { row: usize, col: usize },
    #[error("trajectory {0} did not terminate; Monte Carlo needs complete episodes")]
    Incomplete(usize),
    #[error("trajectory {0} has mismatched state and reward lengths")]
    Malformed(usize),
    #[error("state {state} out of range for {n_states} states")]
    StateOutOfRange { state: usize, n_states: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Episodic environment with finite discrete states and actions.
pub trait TabularEnv {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize;
    /// Returns `(next state, reward, terminal)`.
    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> (usize, f64, bool);
}
