use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::{manifest_path, Manifest};
use super::stats::{summarize, SummaryStats};
use super::train::{derived_seed, SeedStream};
use super::HarnessError;
use crate::agent::QNetwork;
use crate::env::{RunnerConfig, RunnerEnv};
use crate::mdp::argmax;
use crate::nn::{Mode, Tensor};

pub const DEFAULT_EVAL_EPISODES: usize = 30;
pub const EVAL_FILE: &str = "eval.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub episode: usize,
    pub score: u64,
    pub steps: u64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub summary: SummaryStats,
    pub out_dir: Option<PathBuf>,
}

impl EvalReport {
    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score as f64).collect()
    }
}

/// Plays `n_episodes` greedy episodes (ε = 0, batch norm on running
/// statistics). `probe` sees the action values and the chosen action of
/// every step. `max_steps` caps an episode; 0 means no cap.
pub fn evaluate_greedy(
    net: &mut QNetwork,
    n_episodes: usize,
    seed: u64,
    max_steps: u64,
    probe: &mut dyn FnMut(&[f64], usize),
) -> Result<Vec<EvalRecord>, HarnessError> {
    let mut env = RunnerEnv::new(RunnerConfig::default(), 0)?;
    let mut records = Vec::with_capacity(n_episodes);
    for episode in 0..n_episodes {
        let mut obs = env.reset(derived_seed(seed, SeedStream::EvalEpisodes, episode as u64));
        let mut steps = 0u64;
        loop {
            let q = net.forward(&single_batch(&obs)?, Mode::Infer)?.into_data();
            let action = argmax(&q);
            probe(&q, action);
            let result = env.step_index(action)?;
            steps += 1;
            obs = result.observation;
            if result.terminal || (max_steps > 0 && steps >= max_steps) {
                break;
            }
        }
        records.push(EvalRecord { episode, score: env.score(), steps });
    }
    Ok(records)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// Loads a checkpoint, checks it against its manifest and evaluates it.
/// With `out_dir`, writes eval.csv and summary.csv there.
pub fn cmd_eval(
    checkpoint: &Path,
    n_episodes: usize,
    seed: u64,
    max_steps: u64,
    out_dir: Option<&Path>,
) -> Result<EvalReport, HarnessError> {
    if n_episodes == 0 {
        return Err(HarnessError::InvalidConfig("eval needs at least one episode".into()));
    }
    let manifest = Manifest::load(&manifest_path(checkpoint))?;
    let mut net = QNetwork::load(checkpoint)?;
    manifest.check_network(&net)?;
    let records = evaluate_greedy(&mut net, n_episodes, seed, max_steps, &mut |_, _| {})?;
    let summary = summarize(&records.iter().map(|r| r.score as f64).collect::<Vec<_>>())?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
        write_rows(&dir.join(EVAL_FILE), &records)?;
        write_rows(&dir.join(SUMMARY_FILE), &[summary])?;
    }
    Ok(EvalReport { records, summary, out_dir: out_dir.map(Path::to_path_buf) })
}

/// `[C, H, W]` → `[1, C, H, W]`
pub fn single_batch(obs: &Tensor) -> Result<Tensor, HarnessError> {
    let mut shape = vec![1];
    shape.extend_from_slice(obs.shape());
    Ok(obs.clone().reshape(&shape)?)
}
