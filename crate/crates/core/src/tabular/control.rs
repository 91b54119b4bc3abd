use rand::Rng;

use super::{TabularEnv, TabularError};
use crate::mdp::{epsilon_greedy_select, DiscountFactor, EpsilonSchedule, FiniteMdp, QTable};

/// Hyperparameters shared by Sarsa and Q-learning.
///
/// The ε schedule is indexed by episode number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdParams {
    pub alpha: f64,
    pub gamma: DiscountFactor,
    pub epsilon: EpsilonSchedule,
    pub n_episodes: usize,
    /// Per-episode step cap.
    pub max_steps: usize,
}

impl TdParams {
    pub const DEFAULT_MAX_STEPS: usize = 10_000;

    pub fn new(alpha: f64, gamma: DiscountFactor, epsilon: EpsilonSchedule, n_episodes: usize) -> Result<Self, TabularError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(TabularError::InvalidParam(format!("alpha {alpha} outside (0, 1]")));
        }
        if n_episodes == 0 {
            return Err(TabularError::InvalidParam("n_episodes must be at least 1".into()));
        }
        Ok(Self { alpha, gamma, epsilon, n_episodes, max_steps: Self::DEFAULT_MAX_STEPS })
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }
}

/// One tabular write, as seen by a trace observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdUpdate {
    pub episode: usize,
    pub state: usize,
    pub action: usize,
    pub target: f64,
    pub value: f64,
}

/// On-policy TD control: bootstraps from the next action actually chosen.
pub fn sarsa_train<E: TabularEnv, R: Rng + ?Sized>(env: &mut E, params: &TdParams, rng: &mut R) -> QTable {
    sarsa_traced(env, params, rng, |_| {})
}

pub fn sarsa_traced<E, R, F>(env: &mut E, params: &TdParams, rng: &mut R, mut observe: F) -> QTable
where
    E: TabularEnv,
    R: Rng + ?Sized,
    F: FnMut(TdUpdate),
{
    let mut q = QTable::zeros(env.n_states(), env.n_actions());
    let gamma = params.gamma.get();
    for episode in 0..params.n_episodes {
        let eps = params.epsilon.value(episode as u64);
        let mut s = env.reset(rng);
        let mut a = epsilon_greedy_select(q.row(s), eps, rng);
        for _ in 0..params.max_steps {
            let (next, r, done) = env.step(a, rng);
            let (target, next_action) = if done {
                (r, None)
            } else {
                let a2 = epsilon_greedy_select(q.row(next), eps, rng);
                (r + gamma * q.get(next, a2), Some(a2))
            };
            let value = q.get(s, a) + params.alpha * (target - q.get(s, a));
            q.set(s, a, value);
            observe(TdUpdate { episode, state: s, action: a, target, value });
            match next_action {
                Some(a2) => {
                    s = next;
                    a = a2;
                }
                None => break,
            }
        }
    }
    q
}

/// Off-policy TD control: ε-greedy behaviour, greedy target.
pub fn q_learning_train<E: TabularEnv, R: Rng + ?Sized>(env: &mut E, params: &TdParams, rng: &mut R) -> QTable {
    q_learning_traced(env, params, rng, |_| {})
}

pub fn q_learning_traced<E, R, F>(env: &mut E, params: &TdParams, rng: &mut R, mut observe: F) -> QTable
where
    E: TabularEnv,
    R: Rng + ?Sized,
    F: FnMut(TdUpdate),
{
    let mut q = QTable::zeros(env.n_states(), env.n_actions());
    let gamma = params.gamma.get();
    for episode in 0..params.n_episodes {
        let eps = params.epsilon.value(episode as u64);
        let mut s = env.reset(rng);
        for _ in 0..params.max_steps {
            let a = epsilon_greedy_select(q.row(s), eps, rng);
            let (next, r, done) = env.step(a, rng);
            let target = if done { r } else { r + gamma * q.max_value(next) };
            let value = q.get(s, a) + params.alpha * (target - q.get(s, a));
            q.set(s, a, value);
            observe(TdUpdate { episode, state: s, action: a, target, value });
            if done {
                break;
            }
            s = next;
        }
    }
    q
}

/// How [`MdpEnv`] picks the first state of an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartRule {
    Fixed(usize),
    /// Uniform over non-terminal states (exploring starts).
    UniformNonTerminal,
}

/// Samples episodes from a [`FiniteMdp`]; rewards are the expected rewards `R[s][a]`.
#[derive(Debug, Clone)]
pub struct MdpEnv {
    mdp: FiniteMdp,
    start: StartRule,
    state: usize,
}

impl MdpEnv {
    pub fn new(mdp: FiniteMdp, start: StartRule) -> Self {
        Self { mdp, start, state: 0 }
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }
}

impl TabularEnv for MdpEnv {
    fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        self.state = match self.start {
            StartRule::Fixed(s) => s,
            StartRule::UniformNonTerminal => {
                let live: Vec<usize> = (0..self.mdp.n_states()).filter(|&s| !self.mdp.is_terminal(s)).collect();
                live[rng.gen_range(0..live.len())]
            }
        };
        self.state
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> (usize, f64, bool) {
        let r = self.mdp.reward(self.state, action);
        let next = self.mdp.sample_next(self.state, action, rng);
        self.state = next;
        (next, r, self.mdp.is_terminal(next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{q_value_iteration, DiscountFactor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain(n: usize, reward_at_end: f64) -> FiniteMdp {
        // 0 -> 1 -> ... -> n-1 (terminal); action 1 stays put with reward 0
        let mut terminal = vec![false; n];
        terminal[n - 1] = true;
        FiniteMdp::deterministic(n, 2, terminal, move |s, a| {
            if a == 0 {
                (s + 1, if s + 2 == n { reward_at_end } else { 0.0 })
            } else {
                (s, 0.0)
            }
        })
        .unwrap()
    }

    fn params(alpha: f64, gamma: f64, eps: EpsilonSchedule, n: usize) -> TdParams {
        TdParams::new(alpha, DiscountFactor::new(gamma).unwrap(), eps, n).unwrap()
    }

    #[test]
    fn sarsa_single_step_bandit() {
        let mdp = FiniteMdp::deterministic(2, 1, vec![false, true], |_, _| (1, 1.0)).unwrap();
        let mut env = MdpEnv::new(mdp, StartRule::Fixed(0));
        let p = params(0.5, 0.9, EpsilonSchedule::constant(0.0).unwrap(), 1);
        let q = sarsa_train(&mut env, &p, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(q.get(0, 0), 0.5);
    }

    #[test]
    fn q_learning_chain_one_episode() {
        let mdp = FiniteMdp::deterministic(2, 1, vec![false, true], |_, _| (1, 1.0)).unwrap();
        let mut env = MdpEnv::new(mdp, StartRule::Fixed(0));
        let p = params(1.0, 0.9, EpsilonSchedule::constant(0.0).unwrap(), 1);
        let q = q_learning_train(&mut env, &p, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(q.get(0, 0), 1.0);
    }

    #[test]
    fn zero_reward_stays_zero() {
        let mut env = MdpEnv::new(chain(4, 0.0), StartRule::Fixed(0));
        let p = params(0.3, 0.9, EpsilonSchedule::constant(0.5).unwrap(), 200).with_max_steps(50);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q1 = sarsa_train(&mut env, &p, &mut rng);
        let q2 = q_learning_train(&mut env, &p, &mut rng);
        assert!(q1.0.iter().chain(&q2.0).flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn greedy_sarsa_and_q_learning_agree_step_by_step() {
        let p = params(0.5, 0.9, EpsilonSchedule::constant(0.0).unwrap(), 20).with_max_steps(30);
        let mut trace_sarsa = Vec::new();
        let mut trace_q = Vec::new();
        let mut env = MdpEnv::new(chain(3, 1.0), StartRule::Fixed(0));
        let qs = sarsa_traced(&mut env, &p, &mut ChaCha8Rng::seed_from_u64(2), |u| trace_sarsa.push(u));
        let qq = q_learning_traced(&mut env, &p, &mut ChaCha8Rng::seed_from_u64(2), |u| trace_q.push(u));
        assert!(!trace_sarsa.is_empty());
        assert_eq!(trace_sarsa, trace_q);
        assert_eq!(qs, qq);
    }

    #[test]
    fn q_learning_matches_backup_fixed_point_on_chain() {
        let mdp = chain(5, 1.0);
        let gamma = DiscountFactor::new(0.9).unwrap();
        let oracle = q_value_iteration(&mdp, gamma, 1e-12).unwrap();
        let mut env = MdpEnv::new(mdp, StartRule::UniformNonTerminal);
        let p = TdParams::new(0.5, gamma, EpsilonSchedule::new(1.0, 0.01, 2000).unwrap(), 4000)
            .unwrap()
            .with_max_steps(20);
        let q = q_learning_train(&mut env, &p, &mut ChaCha8Rng::seed_from_u64(9));
        assert!(q.sup_distance(&oracle) < 1e-3, "distance {}", q.sup_distance(&oracle));
    }

    #[test]
    fn values_stay_finite() {
        let mut env = MdpEnv::new(chain(5, -1.0), StartRule::UniformNonTerminal);
        let p = params(1.0, 1.0, EpsilonSchedule::constant(1.0).unwrap(), 500).with_max_steps(40);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = sarsa_train(&mut env, &p, &mut rng);
        assert!(q.0.iter().flatten().all(|v| v.is_finite()));
        let q = q_learning_train(&mut env, &p, &mut rng);
        assert!(q.0.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn param_validation() {
        let g = DiscountFactor::new(0.9).unwrap();
        let e = EpsilonSchedule::constant(0.1).unwrap();
        assert!(TdParams::new(0.0, g, e, 1).is_err());
        assert!(TdParams::new(1.5, g, e, 1).is_err());
        assert!(TdParams::new(0.5, g, e, 0).is_err());
    }
}
