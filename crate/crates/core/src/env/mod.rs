//! Deterministic endless-runner game and the image pipeline that turns its
//! frames into stacked 84×84 observations.

mod preprocess;
mod runner;

use thiserror::Error;

use crate::nn::Tensor;

pub use preprocess::{
    binarize, dilate, erode, invert, open, preprocess, preprocess_reference, resize_nearest, write_pgm, Frame, FrameStack,
    BINARIZE_THRESHOLD, OBS_SIZE, STACK_DEPTH,
};
pub use runner::{
    Action, Obstacle, ObstacleKind, RunnerConfig, RunnerGame, RunnerState, StepOutcome, BACKGROUND, FOREGROUND,
    REWARD_CRASH, REWARD_JUMP, REWARD_RUN,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("episode already terminated; call reset first")]
    EpisodeOver,
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("frame of {width}x{height} cannot hold {len} pixels")]
    FrameSize { width: usize, height: usize, len: usize },
    #[error("unknown action index {0}")]
    InvalidAction(usize),
    #[error("i/o: {0}")]
    Io(String),
}

pub const OBSERVATION_SHAPE: [usize; 3] = [STACK_DEPTH, OBS_SIZE, OBS_SIZE];

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// `[4 × 84 × 84]`, newest frame last.
    pub observation: Tensor,
    pub reward: f64,
    pub terminal: bool,
    pub score: u64,
}

/// The game plus frame history; each step renders, preprocesses and stacks.
#[derive(Debug, Clone)]
pub struct RunnerEnv {
    config: RunnerConfig,
    game: RunnerGame,
    stack: FrameStack,
}

impl RunnerEnv {
    pub fn new(config: RunnerConfig, seed: u64) -> Result<Self, EnvError> {
        let game = RunnerGame::new(config.clone(), seed)?;
        let mut stack = FrameStack::new();
        stack.reset(preprocess(&game.render()));
        Ok(Self { config, game, stack })
    }

    /// Fresh episode; the first frame fills all four stack slots.
    pub fn reset(&mut self, seed: u64) -> Tensor {
        self.game = RunnerGame::new(self.config.clone(), seed).expect("config validated at construction");
        self.stack.reset(preprocess(&self.game.render()));
        self.stack.observation()
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        let outcome = self.game.step(action)?;
        self.stack.push(preprocess(&self.game.render()));
        Ok(StepResult {
            observation: self.stack.observation(),
            reward: outcome.reward,
            terminal: outcome.terminal,
            score: outcome.score,
        })
    }

    pub fn step_index(&mut self, action: usize) -> Result<StepResult, EnvError> {
        self.step(Action::from_index(action).ok_or(EnvError::InvalidAction(action))?)
    }

    pub fn observation(&self) -> Tensor {
        self.stack.observation()
    }

    pub fn latest_frame(&self) -> &Frame {
        self.stack.frames().last().expect("stack is never empty")
    }

    pub fn game(&self) -> &RunnerGame {
        &self.game
    }

    pub fn score(&self) -> u64 {
        self.game.score()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic() {
        let mut a = RunnerEnv::new(RunnerConfig::default(), 0).unwrap();
        let mut b = RunnerEnv::new(RunnerConfig::default(), 5).unwrap();
        let oa = a.reset(12);
        let ob = b.reset(12);
        assert_eq!(oa, ob);
        assert_eq!(oa.shape(), &OBSERVATION_SHAPE);
        assert_eq!(a.score(), 0);
    }

    #[test]
    fn observation_shows_agent() {
        let env = RunnerEnv::new(RunnerConfig::default(), 0).unwrap();
        let obs = env.observation();
        let lit = obs.data().iter().filter(|&&v| v == 1.0).count();
        // a 20×24 agent samples to 5×12 cells in each of the 4 frames
        assert_eq!(lit, 4 * 5 * 12);
    }

    #[test]
    fn fast_preprocess_agrees_on_game_frames() {
        let mut game = RunnerGame::new(RunnerConfig::default(), 4).unwrap();
        for t in 0..400 {
            if t % 5 == 0 {
                let f = game.render();
                assert_eq!(preprocess(&f), preprocess_reference(&f));
            }
            let a = game.oracle_action();
            game.step(a).unwrap();
        }
    }

    #[test]
    fn trajectories_repeat_for_a_seed() {
        let run = || {
            let mut env = RunnerEnv::new(RunnerConfig::default(), 3).unwrap();
            let mut trace = Vec::new();
            for t in 0..200 {
                let a = if t % 17 == 0 { Action::Jump } else { Action::Noop };
                let r = env.step(a).unwrap();
                trace.push((r.reward.to_bits(), r.terminal, r.score, r.observation.data().iter().sum::<f64>().to_bits()));
                if r.terminal {
                    break;
                }
            }
            trace
        };
        assert_eq!(run(), run());
    }
}
