use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Timing};
use super::manifest::{manifest_path, Manifest};
use super::stats::epoch_means;
use super::HarnessError;
use crate::agent::{AgentError, DqnAgent, TrainOutcome};
use crate::env::{write_pgm, Action, RunnerConfig, RunnerEnv, OBSERVATION_SHAPE};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "config.json";
pub const COMPARISON_FILE: &str = "comparison.csv";

/// Game ticks per second of simulated play.
pub const TICKS_PER_SECOND: f64 = 60.0;

/// Independent seed streams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    TrainEpisodes = 1,
    EvalEpisodes = 2,
}

/// Seed of episode `index` in `stream`; random access, no shared state.
pub fn derived_seed(run_seed: u64, stream: SeedStream, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(stream as u64);
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

/// One row of metrics.csv.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub score: u64,
    pub steps: u64,
    /// ε in effect at the episode's last step.
    pub epsilon: f64,
    /// Mean minibatch loss over the episode's gradient steps; NaN if none.
    pub loss_mean: f64,
    /// Seconds since the run started, see [`Timing`].
    pub wall_time: f64,
}

#[derive(Debug)]
pub struct TrainReport {
    pub run_dir: PathBuf,
    pub records: Vec<EpisodeRecord>,
    pub checkpoint: PathBuf,
    pub agent: DqnAgent,
}

impl TrainReport {
    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score as f64).collect()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}

fn write_checkpoint(agent: &DqnAgent, config: &RunConfig, episodes: usize, path: &Path) -> Result<(), HarnessError> {
    agent.policy().save(path)?;
    Manifest {
        algorithm: config.algorithm,
        batch_norm: config.batch_norm,
        aggregation: config.aggregation,
        network: config.network,
        observation_shape: OBSERVATION_SHAPE.to_vec(),
        n_actions: Action::COUNT,
        seed: config.seed,
        episodes,
        train_steps: agent.train_steps(),
    }
    .save(&manifest_path(path))
}

/// Trains `config.algorithm` for `config.n_episodes` episodes into
/// `config.out_dir`, calling `progress` after each episode.
pub fn cmd_train(config: &RunConfig, progress: &mut dyn FnMut(&EpisodeRecord)) -> Result<TrainReport, HarnessError> {
    config.validate()?;
    let dir = config.out_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    fs::write(dir.join(CONFIG_FILE), config.to_json()).map_err(|e| io_err(&dir, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut agent = DqnAgent::new(config.agent_config()?, &OBSERVATION_SHAPE, Action::COUNT, &mut rng)?;
    let mut env = RunnerEnv::new(RunnerConfig::default(), derived_seed(config.seed, SeedStream::TrainEpisodes, 0))?;
    let metrics_path = dir.join(METRICS_FILE);
    let mut writer = csv::Writer::from_writer(File::create(&metrics_path).map_err(|e| io_err(&metrics_path, e))?);
    let checkpoint = dir.join(CHECKPOINT_FILE);

    let started = Instant::now();
    let mut total_steps = 0u64;
    let mut records = Vec::with_capacity(config.n_episodes);
    for episode in 0..config.n_episodes {
        let mut state = env.reset(derived_seed(config.seed, SeedStream::TrainEpisodes, episode as u64));
        let (mut steps, mut loss_sum, mut loss_count) = (0u64, 0.0, 0usize);
        let dump_dir = (config.frame_dump_interval > 0 && episode % config.frame_dump_interval == 0)
            .then(|| dir.join("frames").join(format!("episode_{episode:05}")));
        if let Some(d) = &dump_dir {
            fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
        }
        loop {
            let action = agent.act(&state, total_steps, &mut rng)?;
            let result = env.step_index(action)?;
            agent.remember(&state, action, &result.observation, result.reward, result.terminal)?;
            total_steps += 1;
            steps += 1;
            if total_steps % config.train_interval == 0 {
                match agent.train_step(&mut rng) {
                    Ok(TrainOutcome::Trained(stats)) => {
                        loss_sum += stats.loss;
                        loss_count += 1;
                    }
                    Ok(TrainOutcome::WarmingUp { .. }) => {}
                    Err(AgentError::NonFiniteLoss { loss, step }) => {
                        return Err(HarnessError::Diverged { episode, train_step: step, loss });
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            if let Some(d) = &dump_dir {
                let path = d.join(format!("step_{steps:05}.pgm"));
                write_pgm(&path, env.latest_frame())?;
            }
            state = result.observation;
            if result.terminal || (config.max_episode_steps > 0 && steps >= config.max_episode_steps) {
                break;
            }
        }
        let wall_time = match config.timing {
            Timing::Game => total_steps as f64 / TICKS_PER_SECOND,
            Timing::Wall => started.elapsed().as_secs_f64(),
        };
        let record = EpisodeRecord {
            episode,
            score: env.score(),
            steps,
            epsilon: agent.epsilon(total_steps - 1),
            loss_mean: if loss_count > 0 { loss_sum / loss_count as f64 } else { f64::NAN },
            wall_time,
        };
        writer.serialize(record)?;
        writer.flush().map_err(|e| io_err(&metrics_path, e))?;
        progress(&record);
        records.push(record);
        if config.checkpoint_interval > 0 && (episode + 1) % config.checkpoint_interval == 0 {
            write_checkpoint(&agent, config, episode + 1, &checkpoint)?;
        }
    }
    write_checkpoint(&agent, config, config.n_episodes, &checkpoint)?;
    Ok(TrainReport { run_dir: dir, records, checkpoint, agent })
}

/// One training run of a sweep.
#[derive(Debug, Clone)]
pub struct TuneRun {
    pub value: String,
    pub run_dir: PathBuf,
    pub scores: Vec<f64>,
    pub epoch_means: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TuneReport {
    pub key: String,
    pub runs: Vec<TuneRun>,
    pub comparison: PathBuf,
}

/// Trains once per value of `key`, everything else fixed, each run in
/// `base.out_dir/<key>=<value>`, up to `workers` runs at a time. Writes
/// per-epoch mean scores side by side to comparison.csv.
pub fn cmd_tune(base: &RunConfig, key: &str, values: &[String], workers: usize) -> Result<TuneReport, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::InvalidConfig("tune needs at least one value".into()));
    }
    let root = base.out_dir.clone();
    let configs = values
        .iter()
        .map(|v| {
            let mut c = base.clone();
            c.set(key, v)?;
            c.out_dir = root.join(format!("{key}={v}"));
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Vec<f64>, HarnessError>>>> = Mutex::new(configs.iter().map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, configs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(config) = configs.get(i) else { break };
                let outcome = cmd_train(config, &mut |_| {}).map(|r| r.scores());
                results.lock().expect("worker panicked")[i] = Some(outcome);
            });
        }
    });

    let mut runs = Vec::with_capacity(values.len());
    for ((value, config), result) in values.iter().zip(&configs).zip(results.into_inner().expect("workers joined")) {
        let scores = result.expect("every job ran")?;
        runs.push(TuneRun {
            value: value.clone(),
            run_dir: config.out_dir.clone(),
            epoch_means: epoch_means(&scores, base.epoch_size),
            scores,
        });
    }
    fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
    let comparison = root.join(COMPARISON_FILE);
    let mut writer = csv::Writer::from_path(&comparison)?;
    let mut header = vec!["epoch".to_string()];
    header.extend(runs.iter().map(|r| format!("{key}={}", r.value)));
    writer.write_record(&header)?;
    let n_epochs = runs.iter().map(|r| r.epoch_means.len()).max().unwrap_or(0);
    for e in 0..n_epochs {
        let mut row = vec![(e + 1).to_string()];
        row.extend(runs.iter().map(|r| r.epoch_means.get(e).map(|m| m.to_string()).unwrap_or_default()));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| io_err(&comparison, e))?;
    Ok(TuneReport { key: key.to_string(), runs, comparison })
}

/// Fixed reference policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Noop,
    /// Each action with equal probability every tick.
    Random,
}

/// Scores of `policy` on the given episode seeds.
pub fn baseline_scores(policy: Baseline, episode_seeds: &[u64], rng_seed: u64, max_steps: u64) -> Result<Vec<f64>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut scores = Vec::with_capacity(episode_seeds.len());
    let mut env = RunnerEnv::new(RunnerConfig::default(), 0)?;
    for &seed in episode_seeds {
        env.reset(seed);
        let mut steps = 0;
        loop {
            let action = match policy {
                Baseline::Noop => 0,
                Baseline::Random => rng.gen_range(0..Action::COUNT),
            };
            steps += 1;
            if env.step_index(action)?.terminal || (max_steps > 0 && steps >= max_steps) {
                break;
            }
        }
        scores.push(env.score() as f64);
    }
    Ok(scores)
}
