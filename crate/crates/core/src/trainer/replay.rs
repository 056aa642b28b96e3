use std::collections::VecDeque;

use rand::Rng;

use crate::episode::EpisodeRecord;

/// FIFO store of whole episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<EpisodeRecord>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(1024)),
        }
    }

    pub fn push(&mut self, episode: EpisodeRecord) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&EpisodeRecord> {
        self.episodes.get(i)
    }

    /// `n` distinct episodes chosen uniformly, or `None` if fewer are stored.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<&EpisodeRecord>> {
        if n > self.episodes.len() {
            return None;
        }
        let picks = rand::seq::index::sample(rng, self.episodes.len(), n);
        Some(picks.iter().map(|i| &self.episodes[i]).collect())
    }
}
