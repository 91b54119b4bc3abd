//! Experiment harness: training runs, tuning sweeps, greedy evaluation,
//! summary statistics and the cliff-walking demo. Everything the CLI does
//! lives here so it can be driven from tests.

mod cliff;
mod config;
mod eval;
mod manifest;
mod stats;
mod train;

use thiserror::Error;

use crate::agent::AgentError;
use crate::env::EnvError;
use crate::nn::NnError;

pub use cliff::{cmd_cliff, CliffAlgo, CliffParams, CliffReport};
pub use config::{Preset, RunConfig, Timing};
pub use eval::{cmd_eval, evaluate_greedy, single_batch, EvalRecord, EvalReport, DEFAULT_EVAL_EPISODES, EVAL_FILE, SUMMARY_FILE};
pub use manifest::{manifest_path, Manifest};
pub use stats::{epoch_means, percentile, summarize, SummaryStats};
pub use train::{
    baseline_scores, cmd_train, cmd_tune, derived_seed, read_metrics, Baseline, EpisodeRecord, SeedStream, TrainReport,
    TuneReport, TuneRun, CHECKPOINT_FILE, COMPARISON_FILE, CONFIG_FILE, METRICS_FILE, TICKS_PER_SECOND,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown key {key:?}; valid keys: {}", valid.join(", "))]
    UnknownKey { key: String, valid: Vec<String> },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("loss became {loss} at training step {train_step} (episode {episode}); lower learning_rate or check rewards")]
    Diverged { episode: usize, train_step: u64, loss: f64 },
    #[error("cannot summarize an empty score list")]
    EmptyScores,
}
