use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ReplayError, ReplayPool, SumTree};

/// Proportional prioritization settings. `beta` rises linearly from
/// `beta_initial` to 1 over `beta_anneal_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerParams {
    pub alpha: f64,
    pub eps_priority: f64,
    pub beta_initial: f64,
    pub beta_anneal_steps: u64,
}

impl Default for PerParams {
    fn default() -> Self {
        Self { alpha: 0.6, eps_priority: 0.01, beta_initial: 0.4, beta_anneal_steps: 100_000 }
    }
}

impl PerParams {
    pub fn validate(&self) -> Result<(), ReplayError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(ReplayError::InvalidParam(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.eps_priority > 0.0 && self.eps_priority.is_finite()) {
            return Err(ReplayError::InvalidParam(format!("eps_priority must be > 0, got {}", self.eps_priority)));
        }
        if !(self.beta_initial > 0.0 && self.beta_initial <= 1.0) {
            return Err(ReplayError::InvalidParam(format!("beta_initial must lie in (0, 1], got {}", self.beta_initial)));
        }
        Ok(())
    }
}

/// `p = |δ| + ε`, so no transition ever reaches zero priority.
pub fn priority_from_td_error(delta: f64, params: &PerParams) -> f64 {
    delta.abs() + params.eps_priority
}

pub fn beta_schedule(step: u64, params: &PerParams) -> f64 {
    if step >= params.beta_anneal_steps {
        return 1.0;
    }
    let frac = step as f64 / params.beta_anneal_steps as f64;
    (params.beta_initial + (1.0 - params.beta_initial) * frac).min(1.0)
}

/// `w_i = (N·P(i))^(−β) / max_j w_j` over the batch; the largest weight is exactly 1.
pub fn is_weights(probabilities: &[f64], n: usize, beta: f64) -> Result<Vec<f64>, ReplayError> {
    if n == 0 {
        return Err(ReplayError::Empty);
    }
    if let Some(&p) = probabilities.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(ReplayError::InvalidProbability(p));
    }
    let raw: Vec<f64> = probabilities.iter().map(|&p| (n as f64 * p).powf(-beta)).collect();
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(raw.into_iter().map(|w| w / max).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrioritizedSample {
    pub indices: Vec<usize>,
    /// `P(i) = p_i^α / Σ_k p_k^α` for each drawn slot.
    pub probabilities: Vec<f64>,
}

/// Ring-buffer pool whose slots mirror sum-tree leaves holding `p^α`.
#[derive(Debug, Clone)]
pub struct PrioritizedReplay<T> {
    pool: ReplayPool<T>,
    tree: SumTree,
    params: PerParams,
    max_priority: f64,
}

impl<T> PrioritizedReplay<T> {
    pub fn new(capacity: usize, params: PerParams) -> Result<Self, ReplayError> {
        params.validate()?;
        Ok(Self { pool: ReplayPool::new(capacity)?, tree: SumTree::new(capacity), params, max_priority: 1.0 })
    }

    pub fn params(&self) -> &PerParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pool.is_empty()
    }

    pub fn get(&self, slot: usize) -> Option<&T> {
        self.pool.get(slot)
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Largest raw priority seen so far (starts at 1).
    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    /// New entries take the largest priority seen so far.
    pub fn push(&mut self, item: T) -> usize {
        let slot = self.pool.push(item);
        self.tree.update(slot, self.max_priority.powf(self.params.alpha)).expect("slot below tree capacity");
        slot
    }

    /// Stratified draw: one uniform point in each of `batch` equal segments of the total.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<PrioritizedSample, ReplayError> {
        let total = self.tree.total();
        if self.pool.is_empty() || total <= 0.0 {
            return Err(ReplayError::Empty);
        }
        let segment = total / batch as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut probabilities = Vec::with_capacity(batch);
        for k in 0..batch {
            let x = segment * (k as f64 + rng.gen::<f64>());
            let slot = self.tree.descend(x.min(total));
            indices.push(slot);
            probabilities.push(self.tree.get(slot) / total);
        }
        Ok(PrioritizedSample { indices, probabilities })
    }

    /// Sets raw priorities for `slots`; the tree stores `p^α`.
    pub fn update_priorities(&mut self, slots: &[usize], priorities: &[f64]) -> Result<(), ReplayError> {
        assert_eq!(slots.len(), priorities.len());
        for (&slot, &p) in slots.iter().zip(priorities) {
            if slot >= self.pool.len() {
                return Err(ReplayError::LeafOutOfRange { index: slot, capacity: self.pool.len() });
            }
            if !(p >= 0.0 && p.is_finite()) {
                return Err(ReplayError::InvalidPriority(p));
            }
            self.tree.update(slot, p.powf(self.params.alpha))?;
            self.max_priority = self.max_priority.max(p);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(alpha: f64, eps: f64) -> PerParams {
        PerParams { alpha, eps_priority: eps, ..PerParams::default() }
    }

    #[test]
    fn td_error_priorities() {
        assert!((priority_from_td_error(-2.0, &params(0.6, 0.01)) - 2.01).abs() < 1e-15);
        assert_eq!(priority_from_td_error(0.0, &params(0.6, 0.01)), 0.01);
        let zero_eps = PerParams { eps_priority: 0.0, ..PerParams::default() };
        assert_eq!(priority_from_td_error(3.5, &zero_eps), 3.5);
    }

    #[test]
    fn beta_ramp() {
        let p = PerParams { beta_initial: 0.4, beta_anneal_steps: 100, ..PerParams::default() };
        assert_eq!(beta_schedule(0, &p), 0.4);
        assert!((beta_schedule(50, &p) - 0.7).abs() < 1e-15);
        assert_eq!(beta_schedule(1_000_000_000, &p), 1.0);
    }

    #[test]
    fn weight_examples() {
        let w = is_weights(&[0.1, 0.2, 0.3, 0.4], 4, 1.0).unwrap();
        for (a, b) in w.iter().zip([1.0, 0.5, 1.0 / 3.0, 0.25]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(is_weights(&[0.1, 0.7], 4, 0.0).unwrap(), vec![1.0, 1.0]);
        assert_eq!(is_weights(&[0.25; 4], 4, 0.7).unwrap(), vec![1.0; 4]);
        assert!(is_weights(&[0.0, 0.5], 4, 1.0).is_err());
    }

    #[test]
    fn heavy_leaf_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut per = PrioritizedReplay::new(2, params(1.0, 0.01)).unwrap();
        per.push(0);
        per.push(1);
        per.update_priorities(&[0, 1], &[1.0, 3.0]).unwrap();
        let mut heavy = 0;
        for _ in 0..100_000 {
            let s = per.sample(1, &mut rng).unwrap();
            heavy += s.indices[0];
        }
        assert!((heavy as f64 / 100_000.0 - 0.75).abs() < 0.01);
    }

    #[test]
    fn alpha_zero_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut per = PrioritizedReplay::new(4, params(0.0, 0.01)).unwrap();
        for i in 0..4 {
            per.push(i);
        }
        per.update_priorities(&[0, 1, 2, 3], &[0.01, 5.0, 100.0, 0.5]).unwrap();
        let mut counts = [0u32; 4];
        for _ in 0..40_000 {
            counts[per.sample(1, &mut rng).unwrap().indices[0]] += 1;
        }
        for c in counts {
            assert!((c as f64 / 40_000.0 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn single_nonzero_leaf_always_drawn() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut per = PrioritizedReplay::new(8, params(1.0, 0.01)).unwrap();
        for i in 0..5 {
            per.push(i);
        }
        per.update_priorities(&[0, 1, 2, 3, 4], &[0.0, 0.0, 2.0, 0.0, 0.0]).unwrap();
        let s = per.sample(64, &mut rng).unwrap();
        assert!(s.indices.iter().all(|&i| i == 2));
        assert!(s.probabilities.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn fresh_push_takes_max_priority() {
        let mut per = PrioritizedReplay::new(4, params(0.6, 0.01)).unwrap();
        per.push('a');
        per.update_priorities(&[0], &[7.0]).unwrap();
        let slot = per.push('b');
        assert_eq!(per.tree().get(slot), 7.0f64.powf(0.6));
        assert!(per.tree().get(slot) > 0.0);
    }

    #[test]
    fn empty_pool_rejected() {
        let per: PrioritizedReplay<u8> = PrioritizedReplay::new(4, PerParams::default()).unwrap();
        assert_eq!(per.sample(1, &mut ChaCha8Rng::seed_from_u64(0)), Err(ReplayError::Empty));
    }

    proptest! {
        #[test]
        fn weights_max_is_one(probs in prop::collection::vec(1e-6f64..1.0, 1..64), n in 1usize..10_000, beta in 0.0f64..1.0) {
            let w = is_weights(&probs, n, beta).unwrap();
            prop_assert_eq!(w.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
            prop_assert!(w.iter().all(|&x| x > 0.0 && x <= 1.0));
        }

        #[test]
        fn weights_depend_only_on_n_times_p(probs in prop::collection::vec(1e-3f64..0.5, 1..32), beta in 0.0f64..1.0) {
            let a = is_weights(&probs, 100, beta).unwrap();
            let halved: Vec<f64> = probs.iter().map(|p| p / 2.0).collect();
            let b = is_weights(&halved, 200, beta).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
