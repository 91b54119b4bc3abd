//! `dqnlab` command line: train, tune, eval and cliff.
//!
//! Config precedence for train and tune, lowest to highest: preset
//! defaults, then `--config` file keys, then explicit flags.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dqnlab::agent::Algorithm;
use dqnlab::harness::{
    cmd_cliff, cmd_eval, cmd_train, cmd_tune, CliffAlgo, CliffParams, Preset, RunConfig, DEFAULT_EVAL_EPISODES,
};

#[derive(Parser)]
#[command(name = "dqnlab", version, about = "Deep Q-learning experiments on a deterministic endless runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write metrics.csv, a checkpoint and its manifest.
    Train(TrainArgs),
    /// Train once per value of one key and compare per-epoch mean scores.
    Tune {
        /// Config key to vary, e.g. learning_rate.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Concurrent runs; defaults to the number of cores.
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Play greedy episodes with a trained checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EVAL_EPISODES)]
        episodes: usize,
        #[arg(long, env = "RL_SEED", default_value_t = 0)]
        seed: u64,
        /// Directory for eval.csv and summary.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-episode step cap; 0 plays until the agent crashes.
        #[arg(long, default_value_t = 0)]
        max_steps: u64,
    },
    /// Sarsa or Q-learning on the 4x12 cliff walk.
    Cliff {
        #[arg(long, value_parser = parse_cliff_algo)]
        algo: CliffAlgo,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// ε at the last episode, annealed linearly; defaults to --epsilon.
        #[arg(long)]
        epsilon_final: Option<f64>,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        #[arg(long, env = "RL_SEED", default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_algorithm)]
    algo: Option<Algorithm>,
    /// Insert batch normalization after every convolution.
    #[arg(long)]
    bn: bool,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Flat JSON object of config keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "RL_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other config key, as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    Algorithm::parse(s).ok_or_else(|| format!("expected one of dqn, double, dueling, dqn-per; got {s:?}"))
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    Preset::parse(s).ok_or_else(|| format!("expected paper or desk; got {s:?}"))
}

fn parse_cliff_algo(s: &str) -> Result<CliffAlgo, String> {
    CliffAlgo::parse(s).ok_or_else(|| format!("expected sarsa or qlearning; got {s:?}"))
}

impl TrainArgs {
    /// With `tune`, runs default to the preset's tuning length unless `--episodes` or `--set n_episodes=` is given.
    fn resolve(&self, tune: bool) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_json_file(path, self.preset)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => RunConfig::for_preset(self.preset.unwrap_or(Preset::Paper)),
        };
        if tune && self.episodes.is_none() && !self.overrides.iter().any(|o| o.starts_with("n_episodes=")) {
            config.n_episodes = config.preset.tune_episodes();
        }
        if let Some(algo) = self.algo {
            config.algorithm = algo;
        }
        if self.bn {
            config.batch_norm = true;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(n) = self.episodes {
            config.n_episodes = n;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        for o in &self.overrides {
            let Some((k, v)) = o.split_once('=') else { bail!("--set expects KEY=VALUE, got {o:?}") };
            config.set(k.trim(), v.trim())?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => {
            let config = args.resolve(false)?;
            let epoch = config.epoch_size;
            let mut window = Vec::with_capacity(epoch);
            let report = cmd_train(&config, &mut |r| {
                window.push(r.score as f64);
                if window.len() == epoch {
                    let mean = window.iter().sum::<f64>() / epoch as f64;
                    eprintln!("episode {:>5}  epoch mean score {mean:>8.2}  epsilon {:.4}", r.episode + 1, r.epsilon);
                    window.clear();
                }
            })?;
            println!("metrics: {}", report.run_dir.join(dqnlab::harness::METRICS_FILE).display());
            println!("checkpoint: {}", report.checkpoint.display());
        }
        Command::Tune { param, values, workers, train } => {
            let config = train.resolve(true)?;
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
            let report = cmd_tune(&config, &param, &values, workers)?;
            for run in &report.runs {
                let last = run.epoch_means.last().copied().unwrap_or(f64::NAN);
                println!("{}={}: last epoch mean {last:.2} ({})", report.key, run.value, run.run_dir.display());
            }
            println!("comparison: {}", report.comparison.display());
        }
        Command::Eval { checkpoint, episodes, seed, out, max_steps } => {
            let report = cmd_eval(&checkpoint, episodes, seed, max_steps, out.as_deref())?;
            let s = report.summary;
            println!("episodes,mean,std,min,max,p25,p50,p75");
            println!("{},{:.2},{:.2},{},{},{},{},{}", report.records.len(), s.mean, s.std, s.min, s.max, s.p25, s.p50, s.p75);
        }
        Command::Cliff { algo, alpha, gamma, epsilon, epsilon_final, episodes, seed } => {
            let params = CliffParams {
                algo,
                alpha,
                gamma,
                epsilon,
                epsilon_final: epsilon_final.unwrap_or(epsilon),
                episodes,
                seed,
            };
            let report = cmd_cliff(&params)?;
            print!("{}", report.picture);
            println!("path length {}, return {}", report.rollout.len(), report.rollout.total_return);
        }
    }
    Ok(())
}
