use rand::seq::index;

use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminated: bool,
    pub truncated: bool,
}

/// Fixed-capacity ring; the oldest transition is overwritten when full.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            data: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform sample of distinct transitions; `None` if fewer than `batch`
    /// are stored.
    pub fn sample(&self, batch: usize, rng: &mut RngStream) -> Option<Vec<&Transition>> {
        if batch > self.data.len() {
            return None;
        }
        Some(
            index::sample(rng, self.data.len(), batch)
                .into_iter()
                .map(|i| &self.data[i])
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(r: f64) -> Transition {
        Transition {
            obs: vec![],
            action: 0,
            reward: r,
            next_obs: vec![],
            terminated: false,
            truncated: false,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(t(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let mut rewards: Vec<f64> = buf.data.iter().map(|t| t.reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sample_is_without_replacement() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..10 {
            buf.push(t(i as f64));
        }
        let mut rng = RngStream::new(0, 0);
        let batch = buf.sample(10, &mut rng).unwrap();
        let mut seen: Vec<f64> = batch.iter().map(|t| t.reward).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..10).map(|i| i as f64).collect::<Vec<_>>());
        assert!(buf.sample(11, &mut rng).is_none());
    }
}
