use super::TabularError;
use crate::mdp::{DiscountFactor, ValueTable};

/// A recorded episode: `rewards[t]` follows `states[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub rewards: Vec<f64>,
    pub terminated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisitMode {
    First,
    Every,
}

/// Running return sums `S[s]` and visit counts `N[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitCounters {
    pub sum_returns: Vec<f64>,
    pub visit_count: Vec<u64>,
}

impl VisitCounters {
    pub fn new(n_states: usize) -> Self {
        Self { sum_returns: vec![0.0; n_states], visit_count: vec![0; n_states] }
    }

    /// `S(s) / N(s)`, or `None` for a state never visited.
    pub fn value(&self, s: usize) -> Option<f64> {
        match self.visit_count[s] {
            0 => None,
            n => Some(self.sum_returns[s] / n as f64),
        }
    }

    pub fn values(&self) -> Vec<Option<f64>> {
        (0..self.visit_count.len()).map(|s| self.value(s)).collect()
    }
}

/// Monte Carlo value estimation from complete episodes.
pub fn mc_value_estimate(
    episodes: &[Trajectory],
    n_states: usize,
    gamma: DiscountFactor,
    mode: VisitMode,
) -> Result<VisitCounters, TabularError> {
    let mut counters = VisitCounters::new(n_states);
    let g = gamma.get();
    for (i, ep) in episodes.iter().enumerate() {
        if !ep.terminated {
            return Err(TabularError::Incomplete(i));
        }
        if ep.states.len() != ep.rewards.len() {
            return Err(TabularError::Malformed(i));
        }
        if let Some(&state) = ep.states.iter().find(|&&s| s >= n_states) {
            return Err(TabularError::StateOutOfRange { state, n_states });
        }
        let mut returns = vec![0.0; ep.rewards.len()];
        let mut acc = 0.0;
        for t in (0..ep.rewards.len()).rev() {
            acc = ep.rewards[t] + g * acc;
            returns[t] = acc;
        }
        let mut seen = vec![false; n_states];
        for (t, &s) in ep.states.iter().enumerate() {
            if mode == VisitMode::First && seen[s] {
                continue;
            }
            seen[s] = true;
            counters.sum_returns[s] += returns[t];
            counters.visit_count[s] += 1;
        }
    }
    Ok(counters)
}

/// `v(s) ← v(s) + α (r + γ v(s') − v(s))`, with no bootstrap past a terminal step.
pub fn td0_value_update(
    v: &mut ValueTable,
    s: usize,
    r: f64,
    s_next: usize,
    alpha: f64,
    gamma: DiscountFactor,
    terminal: bool,
) {
    let bootstrap = if terminal { 0.0 } else { v.0[s_next] };
    let td_error = r + gamma.get() * bootstrap - v.0[s];
    v.0[s] += alpha * td_error;
}
