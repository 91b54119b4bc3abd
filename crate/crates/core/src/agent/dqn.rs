use rand::Rng;

use super::compact::CompactObs;
use super::network::{build_network, QNetwork};
use super::targets::{double_dqn_target, dqn_target};
use super::{AgentConfig, AgentError, Algorithm};
use crate::mdp::epsilon_greedy_select;
use crate::mdp::argmax;
use crate::nn::{Mode, Optimizer, Tensor};
use crate::replay::{
    beta_schedule, is_weights, priority_from_td_error, PrioritizedReplay, ReplayPool, Transition,
};

type Stored = Transition<CompactObs>;

#[derive(Debug, Clone)]
enum Memory {
    Uniform(ReplayPool<Stored>),
    Prioritized(PrioritizedReplay<Stored>),
}

impl Memory {
    fn len(&self) -> usize {
        match self {
            Memory::Uniform(p) => p.len(),
            Memory::Prioritized(p) => p.len(),
        }
    }

    fn get(&self, slot: usize) -> &Stored {
        match self {
            Memory::Uniform(p) => p.get(slot),
            Memory::Prioritized(p) => p.get(slot),
        }
        .expect("sampled slot is filled")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    /// `(1/M) Σ w_k (y_k − q_k)²`
    pub loss: f64,
    pub mean_q: f64,
    pub max_abs_td: f64,
    pub synced: bool,
    /// Importance-sampling exponent used, prioritized replay only.
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainOutcome {
    /// Not enough stored transitions yet; nothing was updated.
    WarmingUp { stored: usize, needed: usize },
    Trained(TrainStats),
}

/// Policy and target networks, replay memory and optimizer for one run.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    config: AgentConfig,
    policy: QNetwork,
    target: QNetwork,
    optimizer: Optimizer,
    memory: Memory,
    obs_shape: Vec<usize>,
    n_actions: usize,
    steps_since_sync: u64,
    train_steps: u64,
}

impl DqnAgent {
    /// Builds the convolutional network described by `config`.
    pub fn new<R: Rng + ?Sized>(
        config: AgentConfig,
        obs_shape: &[usize],
        n_actions: usize,
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        let net = build_network(&config.network_spec(), obs_shape, n_actions, rng)?;
        Self::with_network(config, net, obs_shape, n_actions)
    }

    /// Uses a caller-supplied policy network; the target starts as its copy.
    pub fn with_network(
        config: AgentConfig,
        network: QNetwork,
        obs_shape: &[usize],
        n_actions: usize,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        if config.algorithm == Algorithm::Dueling && !network.is_dueling() {
            return Err(AgentError::InvalidConfig("dueling algorithm needs a dueling network".into()));
        }
        let out = network.output_len(obs_shape)?;
        if out != n_actions {
            return Err(AgentError::InvalidConfig(format!("network emits {out} values for {n_actions} actions")));
        }
        let memory = if config.algorithm.prioritized() {
            Memory::Prioritized(PrioritizedReplay::new(config.memory_capacity, config.per)?)
        } else {
            Memory::Uniform(ReplayPool::new(config.memory_capacity)?)
        };
        Ok(Self {
            optimizer: Optimizer::new(config.optimizer, config.learning_rate),
            target: network.clone(),
            policy: network,
            memory,
            obs_shape: obs_shape.to_vec(),
            n_actions,
            steps_since_sync: 0,
            train_steps: 0,
            config,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn policy(&self) -> &QNetwork {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut QNetwork {
        &mut self.policy
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn obs_shape(&self) -> &[usize] {
        &self.obs_shape
    }

    pub fn memory_len(&self) -> usize {
        self.memory.len()
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn steps_since_sync(&self) -> u64 {
        self.steps_since_sync
    }

    pub fn epsilon(&self, step: u64) -> f64 {
        self.config.epsilon.value(step)
    }

    fn check_obs(&self, obs: &Tensor) -> Result<(), AgentError> {
        if obs.shape() != self.obs_shape.as_slice() {
            return Err(AgentError::ObservationShape { expected: self.obs_shape.clone(), got: obs.shape().to_vec() });
        }
        Ok(())
    }

    fn batched(&self, obs: &Tensor) -> Tensor {
        let mut shape = vec![1];
        shape.extend_from_slice(&self.obs_shape);
        obs.clone().reshape(&shape).expect("checked shape")
    }

    /// Policy-network action values; batch norm uses running statistics.
    pub fn q_values(&mut self, obs: &Tensor) -> Result<Vec<f64>, AgentError> {
        self.check_obs(obs)?;
        let x = self.batched(obs);
        Ok(self.policy.forward(&x, Mode::Infer)?.into_data())
    }

    pub fn target_q_values(&mut self, obs: &Tensor) -> Result<Vec<f64>, AgentError> {
        self.check_obs(obs)?;
        let x = self.batched(obs);
        Ok(self.target.forward(&x, Mode::Infer)?.into_data())
    }

    pub fn greedy_action(&mut self, obs: &Tensor) -> Result<usize, AgentError> {
        Ok(argmax(&self.q_values(obs)?))
    }

    /// ε-greedy over policy values with ε taken from the schedule at `step`.
    pub fn act<R: Rng + ?Sized>(&mut self, obs: &Tensor, step: u64, rng: &mut R) -> Result<usize, AgentError> {
        let eps = self.epsilon(step);
        let q = self.q_values(obs)?;
        Ok(epsilon_greedy_select(&q, eps, rng))
    }

    pub fn remember(
        &mut self,
        state: &Tensor,
        action: usize,
        next_state: &Tensor,
        reward: f64,
        terminal: bool,
    ) -> Result<(), AgentError> {
        self.check_obs(state)?;
        self.check_obs(next_state)?;
        if action >= self.n_actions {
            return Err(AgentError::ActionOutOfRange { action, n_actions: self.n_actions });
        }
        let t = Transition {
            state: CompactObs::encode(state.data()),
            action,
            next_state: CompactObs::encode(next_state.data()),
            reward,
            terminal,
        };
        match &mut self.memory {
            Memory::Uniform(p) => {
                p.push(t);
            }
            Memory::Prioritized(p) => {
                p.push(t);
            }
        }
        Ok(())
    }

    /// Copies policy parameters into the target network bit for bit.
    pub fn sync_target(&mut self) {
        self.target = self.policy.clone();
        self.steps_since_sync = 0;
    }

    fn stack(&self, slots: &[usize], next: bool) -> Tensor {
        let len: usize = self.obs_shape.iter().product();
        let mut data = vec![0.0; slots.len() * len];
        for (chunk, &slot) in data.chunks_exact_mut(len).zip(slots) {
            let t = self.memory.get(slot);
            if next { &t.next_state } else { &t.state }.decode_into(chunk);
        }
        let mut shape = vec![slots.len()];
        shape.extend_from_slice(&self.obs_shape);
        Tensor::new(shape, data).expect("consistent observation length")
    }

    /// Bootstrapped targets for a batch of next states, computed with the
    /// target network (and, for Double DQN, the policy network's argmax),
    /// both in inference mode.
    pub fn targets(&mut self, next_states: &Tensor, rewards: &[f64], terminals: &[bool]) -> Result<Vec<f64>, AgentError> {
        let gamma = self.config.gamma;
        let n = self.n_actions;
        let next_target = self.target.forward(next_states, Mode::Infer)?;
        let next_policy = match self.config.algorithm {
            Algorithm::Double => Some(self.policy.forward(next_states, Mode::Infer)?),
            _ => None,
        };
        Ok((0..rewards.len())
            .map(|k| {
                let qt = &next_target.data()[k * n..(k + 1) * n];
                match &next_policy {
                    Some(qp) => double_dqn_target(rewards[k], &qp.data()[k * n..(k + 1) * n], qt, terminals[k], gamma),
                    None => dqn_target(rewards[k], qt, terminals[k], gamma),
                }
            })
            .collect())
    }

    /// One gradient step on a sampled minibatch, then target sync every
    /// `target_sync_steps` steps.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<TrainOutcome, AgentError> {
        let needed = self.config.warmup_size.max(self.config.batch_size);
        if self.memory.len() < needed {
            return Ok(TrainOutcome::WarmingUp { stored: self.memory.len(), needed });
        }
        let m = self.config.batch_size;
        let (slots, weights, beta) = match &self.memory {
            Memory::Uniform(p) => (p.sample_indices(m, rng)?, vec![1.0; m], None),
            Memory::Prioritized(p) => {
                let sample = p.sample(m, rng)?;
                let beta = beta_schedule(self.train_steps, p.params());
                let w = is_weights(&sample.probabilities, p.len(), beta)?;
                (sample.indices, w, Some(beta))
            }
        };
        let states = self.stack(&slots, false);
        let next_states = self.stack(&slots, true);
        let (actions, rewards, terminals): (Vec<usize>, Vec<f64>, Vec<bool>) = slots
            .iter()
            .map(|&s| {
                let t = self.memory.get(s);
                (t.action, t.reward, t.terminal)
            })
            .fold((Vec::new(), Vec::new(), Vec::new()), |(mut a, mut r, mut d), (x, y, z)| {
                a.push(x);
                r.push(y);
                d.push(z);
                (a, r, d)
            });
        let y = self.targets(&next_states, &rewards, &terminals)?;

        let q = self.policy.forward(&states, Mode::Train)?;
        let n = self.n_actions;
        let mut grad = vec![0.0; m * n];
        let mut loss = 0.0;
        let mut td = Vec::with_capacity(m);
        for k in 0..m {
            let qk = q.data()[k * n + actions[k]];
            let delta = y[k] - qk;
            loss += weights[k] * delta * delta;
            // the target is a constant: only q(s_k, a_k) receives gradient
            grad[k * n + actions[k]] = -2.0 * weights[k] * delta / m as f64;
            td.push(delta);
        }
        loss /= m as f64;
        if !loss.is_finite() {
            return Err(AgentError::NonFiniteLoss { loss, step: self.train_steps });
        }
        self.policy.backward(&Tensor::new(vec![m, n], grad)?)?;
        self.optimizer.step(&mut self.policy.params_mut());

        if let Memory::Prioritized(p) = &mut self.memory {
            let priorities: Vec<f64> = td.iter().map(|&d| priority_from_td_error(d, p.params())).collect();
            p.update_priorities(&slots, &priorities)?;
        }

        self.train_steps += 1;
        self.steps_since_sync += 1;
        let synced = self.steps_since_sync >= self.config.target_sync_steps;
        if synced {
            self.sync_target();
        }
        Ok(TrainOutcome::Trained(TrainStats {
            loss,
            mean_q: q.data().iter().sum::<f64>() / q.len() as f64,
            max_abs_td: td.iter().fold(0.0, |a, d| a.max(d.abs())),
            synced,
            beta,
        }))
    }

    /// How often each slot was drawn over `batches` prioritized samples; for diagnostics.
    pub fn sample_counts<R: Rng + ?Sized>(&self, batches: usize, rng: &mut R) -> Result<Vec<usize>, AgentError> {
        let mut counts = vec![0; self.memory.len()];
        for _ in 0..batches {
            let slots = match &self.memory {
                Memory::Uniform(p) => p.sample_indices(self.config.batch_size, rng)?,
                Memory::Prioritized(p) => p.sample(self.config.batch_size, rng)?.indices,
            };
            for s in slots {
                counts[s] += 1;
            }
        }
        Ok(counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{Aggregation, NetPreset};
    use crate::mdp::EpsilonSchedule;
    use crate::nn::{ActivationKind, DenseLayer, Layer, OptimizerKind, Sequential};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_net(inputs: usize, outputs: usize) -> QNetwork {
        let w = Tensor::zeros(&[inputs, outputs]);
        let b = Tensor::zeros(&[outputs]);
        QNetwork::direct(Sequential::new(vec![Layer::Dense(
            DenseLayer::from_params(w, b, ActivationKind::Identity).unwrap(),
        )]))
    }

    fn small_config(algorithm: Algorithm) -> AgentConfig {
        AgentConfig {
            algorithm,
            network: NetPreset::Desk,
            batch_size: 1,
            warmup_size: 1,
            memory_capacity: 100,
            target_sync_steps: 10,
            learning_rate: 0.05,
            optimizer: OptimizerKind::Sgd,
            epsilon: EpsilonSchedule::constant(0.0).unwrap(),
            ..AgentConfig::default()
        }
    }

    fn obs(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn warming_up_until_enough_transitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = AgentConfig { batch_size: 2, warmup_size: 3, ..small_config(Algorithm::Dqn) };
        let mut agent = DqnAgent::with_network(cfg, linear_net(2, 2), &[2], 2).unwrap();
        agent.remember(&obs(&[1.0, 0.0]), 0, &obs(&[0.0, 1.0]), 1.0, true).unwrap();
        assert_eq!(agent.train_step(&mut rng).unwrap(), TrainOutcome::WarmingUp { stored: 1, needed: 3 });
    }

    #[test]
    fn single_transition_regression_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut agent = DqnAgent::with_network(small_config(Algorithm::Dqn), linear_net(2, 2), &[2], 2).unwrap();
        let s = obs(&[1.0, 0.5]);
        agent.remember(&s, 1, &obs(&[0.0, 0.0]), 0.7, true).unwrap();
        for _ in 0..500 {
            agent.train_step(&mut rng).unwrap();
        }
        assert!((agent.q_values(&s).unwrap()[1] - 0.7).abs() < 1e-3);
    }

    #[test]
    fn zero_error_leaves_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = AgentConfig { optimizer: OptimizerKind::DEFAULT_RMSPROP, ..small_config(Algorithm::Dqn) };
        let mut agent = DqnAgent::with_network(cfg, linear_net(2, 2), &[2], 2).unwrap();
        agent.remember(&obs(&[1.0, 1.0]), 0, &obs(&[1.0, 1.0]), 0.0, false).unwrap();
        let before = agent.policy().clone();
        match agent.train_step(&mut rng).unwrap() {
            TrainOutcome::Trained(s) => assert_eq!(s.loss, 0.0),
            other => panic!("{other:?}"),
        }
        assert_eq!(agent.policy().params(), before.params());
    }

    #[test]
    fn sync_every_t_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = AgentConfig { target_sync_steps: 3, ..small_config(Algorithm::Dqn) };
        let mut agent = DqnAgent::with_network(cfg, linear_net(2, 2), &[2], 2).unwrap();
        agent.remember(&obs(&[1.0, 0.0]), 0, &obs(&[0.0, 1.0]), 1.0, false).unwrap();
        let mut synced = Vec::new();
        for _ in 0..6 {
            if let TrainOutcome::Trained(s) = agent.train_step(&mut rng).unwrap() {
                synced.push(s.synced);
            }
        }
        assert_eq!(synced, vec![false, false, true, false, false, true]);
        assert_eq!(agent.policy().params(), agent.target().params());
    }

    #[test]
    fn act_is_deterministic_at_zero_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = linear_net(2, 2);
        net.params_mut()[0].value = Tensor::new(vec![2, 2], vec![0.1, 0.9, 0.3, -0.2]).unwrap();
        let mut agent = DqnAgent::with_network(small_config(Algorithm::Dqn), net, &[2], 2).unwrap();
        let s = obs(&[1.0, 0.0]);
        let first = agent.act(&s, 0, &mut rng).unwrap();
        assert_eq!(first, 1);
        for step in 0..50 {
            assert_eq!(agent.act(&s, step, &mut rng).unwrap(), first);
        }
    }

    #[test]
    fn default_exploration_schedule() {
        let agent_cfg = AgentConfig::default();
        assert_eq!(agent_cfg.epsilon.value(0), 0.1);
        assert_eq!(agent_cfg.epsilon.value(100_000), 1e-4);
        assert_eq!(agent_cfg.epsilon.value(5_000_000), 1e-4);
    }

    #[test]
    fn rejects_mismatched_network() {
        assert!(DqnAgent::with_network(small_config(Algorithm::Dqn), linear_net(2, 3), &[2], 2).is_err());
        assert!(DqnAgent::with_network(small_config(Algorithm::Dueling), linear_net(2, 2), &[2], 2).is_err());
        let bn_batch_one = AgentConfig { use_batch_norm: true, ..small_config(Algorithm::Dqn) };
        assert!(bn_batch_one.validate().is_err());
        let _ = Aggregation::Sum;
    }
}
