use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Transition;

/// Fixed-capacity ring of transitions, sampled uniformly with replacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity: capacity.max(1),
            items: Vec::new(),
            next: 0,
        }
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

    /// Overwrites the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample<'a, R: Rng>(&'a self, batch: usize, rng: &mut R) -> Vec<&'a Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::SparseInput;
    use crate::qnet::BranchAction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(reward: f64) -> Transition {
        Transition {
            state: SparseInput::from_dense(&[reward]),
            action: BranchAction::new(alloc::vec![0], 0),
            reward,
            next_state: SparseInput::from_dense(&[0.0]),
            terminal: false,
            periods: 1.0,
        }
    }

    #[test]
    fn growth_is_capped() {
        let mut b = ReplayBuffer::new(3);
        for k in 0..5 {
            b.push(t(k as f64));
            assert_eq!(b.len(), (k + 1).min(3));
        }
        let mut rewards: Vec<f64> = b.items.iter().map(|x| x.reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, [2.0, 3.0, 4.0]);
    }

    #[test]
    fn sampling_covers_buffer() {
        let mut b = ReplayBuffer::new(10);
        for k in 0..4 {
            b.push(t(k as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = b.sample(400, &mut rng);
        assert_eq!(s.len(), 400);
        for k in 0..4 {
            let n = s.iter().filter(|x| x.reward == k as f64).count();
            assert!((70..130).contains(&n), "{k}: {n}");
        }
    }
}
