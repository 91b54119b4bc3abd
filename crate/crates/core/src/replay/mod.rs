//! Experience replay: a FIFO ring buffer with uniform sampling, and
//! proportional prioritized replay on top of a sum-tree.

mod pool;
mod prioritized;
mod sum_tree;

use thiserror::Error;

pub use pool::{ReplayPool, Transition};
pub use prioritized::{beta_schedule, is_weights, priority_from_td_error, PerParams, PrioritizedReplay, PrioritizedSample};
pub use sum_tree::SumTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("cannot draw a batch of {batch} from {size} stored transitions")]
    BatchTooLarge { batch: usize, size: usize },
    #[error("replay pool is empty")]
    Empty,
    #[error("priority must be finite and non-negative, got {0}")]
    InvalidPriority(f64),
    #[error("leaf {index} out of range for capacity {capacity}")]
    LeafOutOfRange { index: usize, capacity: usize },
    #[error("prefix {x} outside [0, {total})")]
    PrefixOutOfRange { x: f64, total: f64 },
    #[error("sampling probability must lie in (0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}
