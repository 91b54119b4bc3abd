use rand::Rng;

use super::ReplayError;

/// One environment step `(s, a, s', r, terminal)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<O> {
    pub state: O,
    pub action: usize,
    pub next_state: O,
    pub reward: f64,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer; once full, each push overwrites the oldest slot.
#[derive(Debug, Clone)]
pub struct ReplayPool<T> {
    capacity: usize,
    items: Vec<T>,
    cursor: usize,
}

impl<T> ReplayPool<T> {
    pub fn new(capacity: usize) -> Result<Self, ReplayError> {
        if capacity == 0 {
            return Err(ReplayError::InvalidParam("pool capacity must be positive".into()));
        }
        Ok(Self { capacity, items: Vec::new(), cursor: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Stores `item` and returns the slot it occupies.
    pub fn push(&mut self, item: T) -> usize {
        let slot = self.cursor;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[slot] = item;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        slot
    }

    pub fn get(&self, slot: usize) -> Option<&T> {
        self.items.get(slot)
    }

    /// Contents from oldest to newest.
    pub fn iter_fifo(&self) -> impl Iterator<Item = &T> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// `batch` slots drawn i.i.d. uniformly; requires at least `batch` stored items.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>, ReplayError> {
        if batch > self.items.len() || self.items.is_empty() {
            return Err(ReplayError::BatchTooLarge { batch, size: self.items.len() });
        }
        Ok((0..batch).map(|_| rng.gen_range(0..self.items.len())).collect())
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&T>, ReplayError> {
        Ok(self.sample_indices(batch, rng)?.into_iter().map(|i| &self.items[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fifo_eviction() {
        let mut pool = ReplayPool::new(2).unwrap();
        for c in ['a', 'b', 'c'] {
            pool.push(c);
        }
        assert_eq!(pool.iter_fifo().copied().collect::<String>(), "bc");
        assert_eq!(pool.len(), 2);
    }

    #[test]
    fn size_saturates_at_capacity() {
        let mut pool = ReplayPool::new(300_000).unwrap();
        for i in 0..300_001u32 {
            pool.push(i);
        }
        assert_eq!(pool.len(), 300_000);
        assert_eq!(pool.iter_fifo().next(), Some(&1));
    }

    #[test]
    fn single_item_and_oversized_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pool = ReplayPool::new(10).unwrap();
        pool.push(7);
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.sample_uniform(1, &mut rng).unwrap(), vec![&7]);
        let mut big = ReplayPool::new(100).unwrap();
        for i in 0..64 {
            big.push(i);
        }
        assert_eq!(big.sample_indices(128, &mut rng), Err(ReplayError::BatchTooLarge { batch: 128, size: 64 }));
    }

    #[test]
    fn uniform_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut pool = ReplayPool::new(1000).unwrap();
        for i in 0..1000 {
            pool.push(i);
        }
        let mut counts = vec![0u32; 1000];
        for _ in 0..100_000 {
            for i in pool.sample_indices(128, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let expected = 100_000.0 * 128.0 / 1000.0;
        for c in counts {
            assert!((c as f64 - expected).abs() < 0.2 * expected);
        }
    }
}
