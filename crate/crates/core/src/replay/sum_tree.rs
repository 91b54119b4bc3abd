use super::ReplayError;

/// Complete binary tree over `capacity` leaves (a power of two); node `i` has
/// children `2i` and `2i + 1`, the root is node 1 and leaves start at `capacity`.
/// Every internal node holds the sum of its two children.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    /// Capacity is `min_leaves` rounded up to a power of two; extra leaves hold 0.
    pub fn new(min_leaves: usize) -> Self {
        let capacity = min_leaves.max(1).next_power_of_two();
        Self { capacity, nodes: vec![0.0; 2 * capacity] }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.capacity + leaf]
    }

    pub fn leaves(&self) -> &[f64] {
        &self.nodes[self.capacity..]
    }

    /// Sets a leaf and recomputes the sums on its root path only.
    pub fn update(&mut self, leaf: usize, priority: f64) -> Result<(), ReplayError> {
        if leaf >= self.capacity {
            return Err(ReplayError::LeafOutOfRange { index: leaf, capacity: self.capacity });
        }
        if !(priority >= 0.0 && priority.is_finite()) {
            return Err(ReplayError::InvalidPriority(priority));
        }
        let mut i = self.capacity + leaf;
        self.nodes[i] = priority;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
        Ok(())
    }

    /// Leaf whose cumulative interval `[prefix, prefix + p)` contains `x`.
    pub fn find_prefix(&self, x: f64) -> Result<usize, ReplayError> {
        let total = self.total();
        if !(x >= 0.0 && x < total) {
            return Err(ReplayError::PrefixOutOfRange { x, total });
        }
        Ok(self.descend(x))
    }

    /// Descent that tolerates rounding at the right edge: an empty right
    /// subtree is never entered, so a positive-priority leaf is returned
    /// whenever the total is positive.
    pub(crate) fn descend(&self, mut x: f64) -> usize {
        let mut i = 1;
        while i < self.capacity {
            let left = self.nodes[2 * i];
            if x < left || self.nodes[2 * i + 1] <= 0.0 {
                i *= 2;
            } else {
                x -= left;
                i = 2 * i + 1;
            }
        }
        i - self.capacity
    }
}
