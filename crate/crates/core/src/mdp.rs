//! Finite MDP vocabulary: returns, ε-greedy selection and exact Bellman backups.
//!
//! The solvers in this module are used as ground truth by the tabular and deep
//! learners, so they favour clarity over speed.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("discount factor {0} outside [0, 1]")]
    InvalidDiscount(f64),
    #[error("transition row for state {state}, action {action} sums to {sum}")]
    NotStochastic { state: usize, action: usize, sum: f64 },
    #[error("negative or non-finite probability at ({state}, {action}, {next})")]
    BadProbability { state: usize, action: usize, next: usize },
    #[error("terminal state {0} must self-loop with zero reward")]
    BadTerminal(usize),
    #[error("table shape mismatch: {0}")]
    Shape(String),
    #[error("value iteration did not converge after {sweeps} sweeps (residual {residual})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("invalid epsilon schedule: {0}")]
    BadSchedule(String),
    #[error("policy row {0} is not a distribution")]
    BadPolicy(usize),
}

/// Discount factor γ ∈ [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountFactor(f64);

impl DiscountFactor {
    pub fn new(gamma: f64) -> Result<Self, MdpError> {
        if (0.0..=1.0).contains(&gamma) {
            Ok(Self(gamma))
        } else {
            Err(MdpError::InvalidDiscount(gamma))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Tabular MDP with explicit transition probabilities `P[s][a][s']` and
/// expected rewards `R[s][a]`. Terminal states are absorbing with zero reward.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<f64>>,
    terminal: Vec<bool>,
}

impl FiniteMdp {
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        terminal: Vec<bool>,
    ) -> Result<Self, MdpError> {
        let n_states = transition.len();
        if n_states == 0 {
            return Err(MdpError::Shape("no states".into()));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(MdpError::Shape("no actions".into()));
        }
        if reward.len() != n_states || terminal.len() != n_states {
            return Err(MdpError::Shape("reward/terminal length differs from state count".into()));
        }
        for s in 0..n_states {
            if transition[s].len() != n_actions || reward[s].len() != n_actions {
                return Err(MdpError::Shape(format!("state {s} has wrong action count")));
            }
            for a in 0..n_actions {
                let row = &transition[s][a];
                if row.len() != n_states {
                    return Err(MdpError::Shape(format!("row ({s}, {a}) has wrong length")));
                }
                for (next, &p) in row.iter().enumerate() {
                    if !(p.is_finite() && p >= 0.0) {
                        return Err(MdpError::BadProbability { state: s, action: a, next });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(MdpError::NotStochastic { state: s, action: a, sum });
                }
                if terminal[s] && (row[s] != 1.0 || reward[s][a] != 0.0) {
                    return Err(MdpError::BadTerminal(s));
                }
            }
        }
        Ok(Self { n_states, n_actions, transition, reward, terminal })
    }

    /// Builds an MDP from a deterministic successor function.
    pub fn deterministic(
        n_states: usize,
        n_actions: usize,
        terminal: Vec<bool>,
        step: impl Fn(usize, usize) -> (usize, f64),
    ) -> Result<Self, MdpError> {
        let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
        let mut reward = vec![vec![0.0; n_actions]; n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                if terminal.get(s).copied().unwrap_or(false) {
                    transition[s][a][s] = 1.0;
                } else {
                    let (next, r) = step(s, a);
                    if next >= n_states {
                        return Err(MdpError::Shape(format!("successor {next} out of range")));
                    }
                    transition[s][a][next] = 1.0;
                    reward[s][a] = r;
                }
            }
        }
        Self::new(transition, reward, terminal)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn probability(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[s][a][next]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[s][a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s][a]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// Samples a successor state of `(s, a)`.
    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let row = &self.transition[s][a];
        for (next, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return next;
            }
        }
        // u landed in the rounding slack above the cumulative sum
        row.iter().rposition(|&p| p > 0.0).unwrap_or(s)
    }

    fn expected_next(&self, s: usize, a: usize, values: impl Fn(usize) -> f64) -> f64 {
        self.transition[s][a]
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(next, &p)| p * values(next))
            .sum()
    }
}

/// State values `v[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable(pub Vec<f64>);

/// Action values `q[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable(pub Vec<Vec<f64>>);

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self(vec![vec![0.0; n_actions]; n_states])
    }

    pub fn n_states(&self) -> usize {
        self.0.len()
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.0[s]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.0[s][a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.0[s][a] = value;
    }

    pub fn max_value(&self, s: usize) -> f64 {
        self.0[s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy_action(&self, s: usize) -> usize {
        argmax(&self.0[s])
    }

    /// Largest absolute entrywise difference.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Stochastic policy `π[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy(Vec<Vec<f64>>);

impl TabularPolicy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self, MdpError> {
        for (s, row) in probs.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(MdpError::BadPolicy(s));
            }
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.0[s][a]
    }

    /// The action with the largest probability in state `s`.
    pub fn mode(&self, s: usize) -> usize {
        argmax(&self.0[s])
    }
}

/// Linear ε annealing from `eps_initial` at step 0 to `eps_final` at
/// `explore_steps`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    eps_initial: f64,
    eps_final: f64,
    explore_steps: u64,
}

impl EpsilonSchedule {
    pub fn new(eps_initial: f64, eps_final: f64, explore_steps: u64) -> Result<Self, MdpError> {
        if !(0.0 <= eps_final && eps_final <= eps_initial && eps_initial <= 1.0) {
            return Err(MdpError::BadSchedule(format!(
                "need 0 <= final ({eps_final}) <= initial ({eps_initial}) <= 1"
            )));
        }
        if explore_steps == 0 {
            return Err(MdpError::BadSchedule("explore_steps must be at least 1".into()));
        }
        Ok(Self { eps_initial, eps_final, explore_steps })
    }

    pub fn constant(epsilon: f64) -> Result<Self, MdpError> {
        Self::new(epsilon, epsilon, 1)
    }

    pub fn eps_initial(&self) -> f64 {
        self.eps_initial
    }

    pub fn eps_final(&self) -> f64 {
        self.eps_final
    }

    pub fn explore_steps(&self) -> u64 {
        self.explore_steps
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.explore_steps {
            return self.eps_final;
        }
        let frac = step as f64 / self.explore_steps as f64;
        self.eps_initial + (self.eps_final - self.eps_initial) * frac
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `Σ_k γ^k r_k`, evaluated back to front so that the recursion
/// `G = r_0 + γ G'` holds exactly.
pub fn discounted_return(rewards: &[f64], gamma: DiscountFactor) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, &r| r + gamma.get() * acc)
}

/// Picks a uniformly random action with probability ε, otherwise the greedy one.
///
/// # Panics
/// Panics if `q_row` is empty.
pub fn epsilon_greedy_select<R: Rng + ?Sized>(q_row: &[f64], epsilon: f64, rng: &mut R) -> usize {
    assert!(!q_row.is_empty(), "epsilon_greedy_select needs at least one action");
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q_row.len())
    } else {
        argmax(q_row)
    }
}

pub const DEFAULT_VI_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_VI_SWEEPS: usize = 10_000;

/// Value iteration with the default sweep cap.
pub fn value_iteration(mdp: &FiniteMdp, gamma: DiscountFactor, tol: f64) -> Result<ValueTable, MdpError> {
    value_iteration_with_trace(mdp, gamma, tol, DEFAULT_VI_SWEEPS).map(|(v, _)| v)
}

/// Synchronous value iteration. Also returns the sup-norm residual of every sweep.
pub fn value_iteration_with_trace(
    mdp: &FiniteMdp,
    gamma: DiscountFactor,
    tol: f64,
    max_sweeps: usize,
) -> Result<(ValueTable, Vec<f64>), MdpError> {
    let g = gamma.get();
    let mut v = vec![0.0; mdp.n_states];
    let mut residuals = Vec::new();
    for _ in 0..max_sweeps {
        let next: Vec<f64> = (0..mdp.n_states)
            .map(|s| {
                if mdp.terminal[s] {
                    return 0.0;
                }
                (0..mdp.n_actions)
                    .map(|a| mdp.reward[s][a] + g * mdp.expected_next(s, a, |n| v[n]))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        residuals.push(residual);
        if residual < tol {
            return Ok((ValueTable(v), residuals));
        }
    }
    Err(MdpError::NoConvergence {
        sweeps: max_sweeps,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// One application of the Bellman optimality operator on action values.
pub fn q_optimality_backup(mdp: &FiniteMdp, q: &QTable, gamma: DiscountFactor) -> Result<QTable, MdpError> {
    if q.0.len() != mdp.n_states || q.0.iter().any(|r| r.len() != mdp.n_actions) {
        return Err(MdpError::Shape("q table does not match MDP".into()));
    }
    let g = gamma.get();
    let rows = (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| {
                    if mdp.terminal[s] {
                        0.0
                    } else {
                        mdp.reward[s][a] + g * mdp.expected_next(s, a, |n| q.max_value(n))
                    }
                })
                .collect()
        })
        .collect();
    Ok(QTable(rows))
}

/// Iterates [`q_optimality_backup`] from zero until the sup-norm change drops below `tol`.
pub fn q_value_iteration(mdp: &FiniteMdp, gamma: DiscountFactor, tol: f64) -> Result<QTable, MdpError> {
    let mut q = QTable::zeros(mdp.n_states, mdp.n_actions);
    for _ in 0..DEFAULT_VI_SWEEPS {
        let next = q_optimality_backup(mdp, &q, gamma)?;
        let residual = next.sup_distance(&q);
        q = next;
        if residual < tol {
            return Ok(q);
        }
    }
    Err(MdpError::NoConvergence { sweeps: DEFAULT_VI_SWEEPS, residual: f64::NAN })
}

/// Exact policy evaluation, returning `(v_π, q_π)`.
pub fn evaluate_policy(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    gamma: DiscountFactor,
    tol: f64,
) -> Result<(ValueTable, QTable), MdpError> {
    if policy.0.len() != mdp.n_states || policy.0.iter().any(|r| r.len() != mdp.n_actions) {
        return Err(MdpError::Shape("policy does not match MDP".into()));
    }
    let g = gamma.get();
    let mut v = vec![0.0; mdp.n_states];
    let mut converged = false;
    for _ in 0..DEFAULT_VI_SWEEPS {
        let next: Vec<f64> = (0..mdp.n_states)
            .map(|s| {
                if mdp.terminal[s] {
                    return 0.0;
                }
                (0..mdp.n_actions)
                    .map(|a| policy.0[s][a] * (mdp.reward[s][a] + g * mdp.expected_next(s, a, |n| v[n])))
                    .sum()
            })
            .collect();
        let residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if residual < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(MdpError::NoConvergence { sweeps: DEFAULT_VI_SWEEPS, residual: f64::NAN });
    }
    let q = (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| {
                    if mdp.terminal[s] {
                        0.0
                    } else {
                        mdp.reward[s][a] + g * mdp.expected_next(s, a, |n| v[n])
                    }
                })
                .collect()
        })
        .collect();
    Ok((ValueTable(v), QTable(q)))
}

/// Deterministic policy putting all mass on the greedy action of each row.
pub fn greedy_policy_from_q(q: &QTable) -> TabularPolicy {
    let probs = q
        .0
        .iter()
        .map(|row| {
            let best = argmax(row);
            (0..row.len()).map(|a| if a == best { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    TabularPolicy(probs)
}
