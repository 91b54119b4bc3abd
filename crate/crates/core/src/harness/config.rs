use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::HarnessError;
use crate::agent::{Aggregation, AgentConfig, Algorithm, NetPreset};
use crate::mdp::EpsilonSchedule;
use crate::nn::OptimizerKind;
use crate::replay::PerParams;

/// Named bundle of defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-size network and the long schedule.
    Paper,
    /// Small network, short schedule, minutes on one core.
    Desk,
}

impl Preset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper" => Some(Preset::Paper),
            "desk" => Some(Preset::Desk),
            _ => None,
        }
    }

    /// Episodes per run in a tuning sweep.
    pub fn tune_episodes(self) -> usize {
        match self {
            Preset::Paper => 800,
            Preset::Desk => 80,
        }
    }
}

/// How `wall_time` in metrics.csv is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timing {
    /// Cumulative game ticks at 60 ticks per second; reproducible.
    Game,
    /// Elapsed real seconds; varies between runs.
    Wall,
}

/// Every knob of a training run, as one flat key space.
///
/// Keys are the JSON field names; [`RunConfig::set`] and config files use them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub env: String,
    pub algorithm: Algorithm,
    pub batch_norm: bool,
    pub aggregation: Aggregation,
    pub network: NetPreset,
    pub gamma: f64,
    pub batch_size: usize,
    pub target_sync_steps: u64,
    pub epsilon_initial: f64,
    pub epsilon_final: f64,
    pub explore_steps: u64,
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    pub warmup_size: usize,
    pub memory_capacity: usize,
    pub per_alpha: f64,
    pub per_eps: f64,
    pub per_beta_initial: f64,
    pub per_beta_anneal_steps: u64,
    /// Environment steps between gradient steps.
    pub train_interval: u64,
    pub n_episodes: usize,
    pub epoch_size: usize,
    /// Episode step cap during training; 0 means none.
    pub max_episode_steps: u64,
    /// Episodes between checkpoint writes; 0 writes only at the end.
    pub checkpoint_interval: usize,
    /// Episodes between PGM frame dumps; 0 disables them.
    pub frame_dump_interval: usize,
    pub timing: Timing,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn paper() -> Self {
        let agent = AgentConfig::default();
        let OptimizerKind::RmsProp { decay, eps } = OptimizerKind::DEFAULT_RMSPROP else { unreachable!() };
        Self {
            preset: Preset::Paper,
            env: "runner".into(),
            algorithm: agent.algorithm,
            batch_norm: agent.use_batch_norm,
            aggregation: agent.aggregation,
            network: NetPreset::Paper,
            gamma: agent.gamma,
            batch_size: agent.batch_size,
            target_sync_steps: agent.target_sync_steps,
            epsilon_initial: agent.epsilon.eps_initial(),
            epsilon_final: agent.epsilon.eps_final(),
            explore_steps: agent.epsilon.explore_steps(),
            learning_rate: agent.learning_rate,
            rmsprop_decay: decay,
            rmsprop_eps: eps,
            warmup_size: agent.warmup_size,
            memory_capacity: agent.memory_capacity,
            per_alpha: agent.per.alpha,
            per_eps: agent.per.eps_priority,
            per_beta_initial: agent.per.beta_initial,
            per_beta_anneal_steps: agent.per.beta_anneal_steps,
            train_interval: 1,
            n_episodes: 2000,
            epoch_size: 10,
            max_episode_steps: 0,
            checkpoint_interval: 100,
            frame_dump_interval: 0,
            timing: Timing::Game,
            seed: 0,
            out_dir: PathBuf::from("runs/train"),
        }
    }

    pub fn desk() -> Self {
        Self {
            preset: Preset::Desk,
            network: NetPreset::Desk,
            memory_capacity: 10_000,
            batch_size: 32,
            learning_rate: 2.5e-4,
            epsilon_initial: 1.0,
            epsilon_final: 0.01,
            explore_steps: 10_000,
            target_sync_steps: 500,
            train_interval: 4,
            // Bounds the cost of a run once the agent survives for long.
            max_episode_steps: 500,
            n_episodes: 400,
            checkpoint_interval: 0,
            ..Self::paper()
        }
    }

    pub fn for_preset(preset: Preset) -> Self {
        match preset {
            Preset::Paper => Self::paper(),
            Preset::Desk => Self::desk(),
        }
    }

    /// Every key accepted by [`RunConfig::set`], in declaration order.
    pub fn keys() -> Vec<String> {
        match serde_json::to_value(Self::paper()) {
            Ok(Value::Object(map)) => map.keys().cloned().collect(),
            _ => unreachable!("config serializes to an object"),
        }
    }

    /// Sets one key from its textual form. Numbers, booleans and bare
    /// strings are accepted.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let parsed = serde_json::from_str::<Value>(value).unwrap_or_else(|_| Value::String(value.to_string()));
        let mut one = Map::new();
        one.insert(key.to_string(), parsed);
        self.merge(one)
    }

    /// Overlays the keys of a JSON object onto this config.
    pub fn merge(&mut self, overrides: Map<String, Value>) -> Result<(), HarnessError> {
        let Value::Object(mut map) = serde_json::to_value(&*self)? else { unreachable!("config serializes to an object") };
        for (key, value) in overrides {
            if !map.contains_key(&key) {
                return Err(HarnessError::UnknownKey { key, valid: Self::keys() });
            }
            let value = match (&map[&key], value) {
                // `--values 1,0` style input for booleans
                (Value::Bool(_), Value::Number(n)) if n.as_u64() == Some(0) || n.as_u64() == Some(1) => {
                    Value::Bool(n.as_u64() == Some(1))
                }
                (_, v) => v,
            };
            map.insert(key.clone(), value);
            *self = serde_json::from_value(Value::Object(map.clone()))
                .map_err(|e| HarnessError::InvalidConfig(format!("{key}: {e}")))?;
        }
        Ok(())
    }

    /// Reads a flat JSON object. A `preset` key selects the base defaults
    /// unless `preset` is given; all other keys then override them.
    pub fn from_json_file(path: &Path, preset: Option<Preset>) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let Value::Object(mut map) = serde_json::from_str::<Value>(&text)? else {
            return Err(HarnessError::InvalidConfig(format!("{} is not a JSON object", path.display())));
        };
        let file_preset = match map.remove("preset") {
            Some(Value::String(s)) => {
                Some(Preset::parse(&s).ok_or_else(|| HarnessError::InvalidConfig(format!("unknown preset {s:?}")))?)
            }
            Some(other) => return Err(HarnessError::InvalidConfig(format!("preset must be a string, got {other}"))),
            None => None,
        };
        let mut config = Self::for_preset(preset.or(file_preset).unwrap_or(Preset::Paper));
        config.merge(map)?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn agent_config(&self) -> Result<AgentConfig, HarnessError> {
        let epsilon = EpsilonSchedule::new(self.epsilon_initial, self.epsilon_final, self.explore_steps)
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        Ok(AgentConfig {
            algorithm: self.algorithm,
            use_batch_norm: self.batch_norm,
            aggregation: self.aggregation,
            network: self.network,
            gamma: self.gamma,
            batch_size: self.batch_size,
            target_sync_steps: self.target_sync_steps,
            epsilon,
            learning_rate: self.learning_rate,
            warmup_size: self.warmup_size,
            memory_capacity: self.memory_capacity,
            per: PerParams {
                alpha: self.per_alpha,
                eps_priority: self.per_eps,
                beta_initial: self.per_beta_initial,
                beta_anneal_steps: self.per_beta_anneal_steps,
            },
            optimizer: OptimizerKind::RmsProp { decay: self.rmsprop_decay, eps: self.rmsprop_eps },
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.env != "runner" {
            return Err(HarnessError::InvalidConfig(format!("unknown env {:?}; only \"runner\" exists", self.env)));
        }
        if self.n_episodes == 0 || self.epoch_size == 0 || self.train_interval == 0 {
            return Err(HarnessError::InvalidConfig("n_episodes, epoch_size and train_interval must be positive".into()));
        }
        self.agent_config()?.validate()?;
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::paper()
    }
}
