use std::collections::VecDeque;

/// Ring buffer of an agent's most recent per-step rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardBuffer {
    capacity: usize,
    rewards: VecDeque<f64>,
}

impl RewardBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "reward buffer capacity must be positive");
        Self {
            capacity,
            rewards: VecDeque::with_capacity(capacity),
        }
    }

    /// Appends `r`, evicting the oldest entry when full.
    pub fn record(&mut self, r: f64) {
        if self.rewards.len() == self.capacity {
            self.rewards.pop_front();
        }
        self.rewards.push_back(r);
    }

    /// Sum of the current contents.
    pub fn sum(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.rewards.iter().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_push() {
        let mut b = RewardBuffer::new(96);
        b.record(1.0);
        assert_eq!(b.sum(), 1.0);
    }

    #[test]
    fn fifo_eviction() {
        let mut b = RewardBuffer::new(2);
        for r in [1.0, 2.0, 3.0] {
            b.record(r);
        }
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![2.0, 3.0]);
        assert_eq!(b.sum(), 5.0);
    }

    #[test]
    fn zeros_sum_to_zero() {
        let mut b = RewardBuffer::new(96);
        for _ in 0..96 {
            b.record(0.0);
        }
        assert_eq!(b.sum(), 0.0);
        assert_eq!(b.len(), 96);
    }

    proptest! {
        #[test]
        fn keeps_last_k(cap in 1usize..20, rs in prop::collection::vec(-10.0f64..10.0, 0..60)) {
            let mut b = RewardBuffer::new(cap);
            for &r in &rs {
                b.record(r);
            }
            let start = rs.len().saturating_sub(cap);
            prop_assert_eq!(b.iter().collect::<Vec<_>>(), rs[start..].to_vec());
            prop_assert!(b.len() <= cap);
            prop_assert_eq!(b.sum(), rs[start..].iter().sum::<f64>());
        }
    }
}
