use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::preprocess::Frame;
use super::EnvError;

pub const REWARD_CRASH: f64 = -1.0;
pub const REWARD_JUMP: f64 = 0.0;
pub const REWARD_RUN: f64 = 0.1;

pub const BACKGROUND: f64 = 1.0;
pub const FOREGROUND: f64 = 0.33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Noop,
    Jump,
}

impl Action {
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        match self {
            Action::Noop => 0,
            Action::Jump => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Action::Noop),
            1 => Some(Action::Jump),
            _ => None,
        }
    }
}

/// Game internals. Lengths are pixels of the raw frame, times are ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunnerConfig {
    pub frame_width: usize,
    pub frame_height: usize,
    /// Raw-frame row of the agent's feet when grounded.
    pub ground_row: usize,
    pub agent_x: f64,
    pub agent_width: f64,
    pub agent_height: f64,
    pub jump_velocity: f64,
    pub gravity: f64,
    pub base_speed: f64,
    pub speed_increment: f64,
    pub speed_interval: u64,
    pub max_speed: f64,
    /// Left edge of the first obstacle at tick 0.
    pub first_obstacle_x: f64,
    /// Gap between obstacles, in ticks of travel at the current speed.
    pub gap_ticks: (u32, u32),
    pub cactus_width: (u32, u32),
    pub cactus_height: (u32, u32),
    pub bird_after_tick: u64,
    pub bird_probability: f64,
    pub bird_width: (u32, u32),
    pub bird_elevation: (u32, u32),
    /// Upper bound on a bird's top edge above ground; keeps birds jumpable.
    pub bird_max_top: u32,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            frame_width: 336,
            frame_height: 168,
            ground_row: 149,
            agent_x: 24.0,
            agent_width: 20.0,
            agent_height: 24.0,
            jump_velocity: 10.0,
            gravity: 1.0,
            base_speed: 6.0,
            speed_increment: 0.5,
            speed_interval: 200,
            max_speed: 11.0,
            first_obstacle_x: 360.0,
            gap_ticks: (36, 72),
            cactus_width: (12, 24),
            cactus_height: (20, 36),
            bird_after_tick: 500,
            bird_probability: 0.25,
            bird_width: (18, 24),
            bird_elevation: (10, 14),
            bird_max_top: 34,
        }
    }
}

impl RunnerConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let ranges = [
            ("gap_ticks", self.gap_ticks),
            ("cactus_width", self.cactus_width),
            ("cactus_height", self.cactus_height),
            ("bird_width", self.bird_width),
            ("bird_elevation", self.bird_elevation),
        ];
        for (name, (lo, hi)) in ranges {
            if lo > hi || hi == 0 {
                return Err(EnvError::InvalidConfig(format!("{name} range ({lo}, {hi}) is empty")));
            }
        }
        if self.bird_elevation.1 >= self.bird_max_top {
            return Err(EnvError::InvalidConfig("bird_elevation must stay below bird_max_top".into()));
        }
        if !(self.base_speed > 0.0 && self.max_speed >= self.base_speed && self.speed_increment >= 0.0) {
            return Err(EnvError::InvalidConfig("speeds must satisfy 0 < base_speed <= max_speed".into()));
        }
        if !(self.gravity > 0.0 && self.jump_velocity > 0.0) {
            return Err(EnvError::InvalidConfig("gravity and jump_velocity must be positive".into()));
        }
        if self.speed_interval == 0 {
            return Err(EnvError::InvalidConfig("speed_interval must be positive".into()));
        }
        if self.ground_row >= self.frame_height || self.agent_x + self.agent_width > self.frame_width as f64 {
            return Err(EnvError::InvalidConfig("agent does not fit in the frame".into()));
        }
        if !(0.0..=1.0).contains(&self.bird_probability) {
            return Err(EnvError::InvalidConfig("bird_probability must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Speed after `tick` survived ticks.
    pub fn speed_at(&self, tick: u64) -> f64 {
        (self.base_speed + self.speed_increment * (tick / self.speed_interval) as f64).min(self.max_speed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObstacleKind {
    Cactus,
    Bird,
}

/// Axis-aligned box; `x` is the left edge in frame pixels, `elevation` the
/// gap between its bottom and the ground.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub id: u64,
    pub kind: ObstacleKind,
    pub x: f64,
    pub width: f64,
    pub height: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone)]
pub struct RunnerState {
    /// Height of the agent's feet above ground; 0 when grounded.
    pub agent_y: f64,
    pub vertical_velocity: f64,
    pub obstacles: Vec<Obstacle>,
    pub speed: f64,
    /// Survived ticks.
    pub tick: u64,
    pub terminal: bool,
    next_id: u64,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub terminal: bool,
    pub score: u64,
}

/// The endless-runner game: two actions, scrolling obstacles, accelerating speed.
#[derive(Debug, Clone)]
pub struct RunnerGame {
    config: RunnerConfig,
    state: RunnerState,
}

impl RunnerGame {
    pub fn new(config: RunnerConfig, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let mut game = Self {
            state: RunnerState {
                agent_y: 0.0,
                vertical_velocity: 0.0,
                obstacles: Vec::new(),
                speed: config.base_speed,
                tick: 0,
                terminal: false,
                next_id: 0,
                rng: ChaCha8Rng::seed_from_u64(seed),
            },
            config,
        };
        let first = game.make_obstacle(game.config.first_obstacle_x);
        game.state.obstacles.push(first);
        game.fill_obstacles();
        Ok(game)
    }

    pub fn config(&self) -> &RunnerConfig {
        &self.config
    }

    pub fn state(&self) -> &RunnerState {
        &self.state
    }

    /// Survived ticks divided by 10.
    pub fn score(&self) -> u64 {
        self.state.tick / 10
    }

    pub fn is_grounded(&self) -> bool {
        self.state.agent_y == 0.0 && self.state.vertical_velocity == 0.0
    }

    fn make_obstacle(&mut self, x: f64) -> Obstacle {
        let c = &self.config;
        let rng = &mut self.state.rng;
        let bird = self.state.tick >= c.bird_after_tick && rng.gen_bool(c.bird_probability);
        let (kind, width, height, elevation) = if bird {
            let elevation = rng.gen_range(c.bird_elevation.0..=c.bird_elevation.1);
            let max_h = c.bird_max_top - elevation;
            let height = rng.gen_range(max_h.min(12)..=max_h.min(20));
            (ObstacleKind::Bird, rng.gen_range(c.bird_width.0..=c.bird_width.1), height, elevation)
        } else {
            let w = rng.gen_range(c.cactus_width.0..=c.cactus_width.1);
            (ObstacleKind::Cactus, w, rng.gen_range(c.cactus_height.0..=c.cactus_height.1), 0)
        };
        let id = self.state.next_id;
        self.state.next_id += 1;
        Obstacle { id, kind, x, width: width as f64, height: height as f64, elevation: elevation as f64 }
    }

    /// Spawns obstacles until one lies past the right edge of the frame.
    fn fill_obstacles(&mut self) {
        loop {
            let last = self.state.obstacles.last().expect("at least one obstacle");
            if last.x >= self.config.frame_width as f64 {
                return;
            }
            let ticks = self.state.rng.gen_range(self.config.gap_ticks.0..=self.config.gap_ticks.1);
            let x = last.x + last.width + self.state.speed * ticks as f64;
            let next = self.make_obstacle(x);
            self.state.obstacles.push(next);
        }
    }

    pub fn collides(&self) -> bool {
        let c = &self.config;
        let (y, x0, x1) = (self.state.agent_y, c.agent_x, c.agent_x + c.agent_width);
        self.state.obstacles.iter().any(|o| {
            o.x < x1 && o.x + o.width > x0 && y < o.elevation + o.height && y + c.agent_height > o.elevation
        })
    }

    /// One tick: jump impulse if grounded, gravity, scroll, spawn, collide.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.state.terminal {
            return Err(EnvError::EpisodeOver);
        }
        if action == Action::Jump && self.is_grounded() {
            self.state.vertical_velocity = self.config.jump_velocity;
        }
        let s = &mut self.state;
        s.agent_y += s.vertical_velocity;
        if s.agent_y <= 0.0 {
            s.agent_y = 0.0;
            s.vertical_velocity = 0.0;
        } else {
            s.vertical_velocity -= self.config.gravity;
        }
        let speed = s.speed;
        for o in &mut s.obstacles {
            o.x -= speed;
        }
        s.obstacles.retain(|o| o.x + o.width > 0.0);
        self.fill_obstacles();

        if self.collides() {
            self.state.terminal = true;
            return Ok(StepOutcome { reward: REWARD_CRASH, terminal: true, score: self.score() });
        }
        self.state.tick += 1;
        self.state.speed = self.config.speed_at(self.state.tick);
        let reward = if action == Action::Jump { REWARD_JUMP } else { REWARD_RUN };
        Ok(StepOutcome { reward, terminal: false, score: self.score() })
    }

    /// Filled rectangles for the agent and obstacles on a light background.
    pub fn render(&self) -> Frame {
        let c = &self.config;
        let mut f = Frame::filled(c.frame_width, c.frame_height, BACKGROUND);
        let ground = c.ground_row as i64 + 1;
        let mut rect = |x: f64, w: f64, elevation: f64, h: f64| {
            let bottom = ground - elevation.floor() as i64;
            f.fill_rect(bottom - h as i64, bottom, x.floor() as i64, (x + w).floor() as i64, FOREGROUND);
        };
        rect(c.agent_x, c.agent_width, self.state.agent_y, c.agent_height);
        for o in &self.state.obstacles {
            rect(o.x, o.width, o.elevation, o.height);
        }
        f
    }

    /// Whether some action sequence avoids a crash for the next `ticks` ticks.
    /// Decisions only matter while grounded, so the search branches there alone.
    pub fn can_survive(&self, ticks: u32) -> bool {
        if self.state.terminal {
            return false;
        }
        if ticks == 0 {
            return true;
        }
        let options: &[Action] = if self.is_grounded() { &[Action::Noop, Action::Jump] } else { &[Action::Noop] };
        options.iter().any(|&a| {
            let mut next = self.clone();
            matches!(next.step(a), Ok(o) if !o.terminal) && next.can_survive(ticks - 1)
        })
    }

    /// Ticks from take-off to landing.
    pub fn airborne_ticks(&self) -> u32 {
        let (v, g) = (self.config.jump_velocity, self.config.gravity);
        let (mut y, mut vy, mut n) = (v, v - g, 1);
        while y > 0.0 {
            y += vy;
            vy -= g;
            n += 1;
        }
        n
    }

    /// Jump exactly when staying on the ground this tick would make a crash unavoidable.
    pub fn oracle_should_jump(&self) -> bool {
        if self.state.terminal || !self.is_grounded() {
            return false;
        }
        let horizon = 2 * self.airborne_ticks() + 2;
        let mut wait = self.clone();
        !matches!(wait.step(Action::Noop), Ok(o) if !o.terminal) || !wait.can_survive(horizon)
    }

    pub fn oracle_action(&self) -> Action {
        if self.oracle_should_jump() {
            Action::Jump
        } else {
            Action::Noop
        }
    }
}
