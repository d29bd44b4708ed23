use rand::Rng;

use super::Transition;

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn extend<I: IntoIterator<Item = Transition>>(&mut self, it: I) {
        for t in it {
            self.push(t);
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| self.items[rng.random_range(0..self.items.len())].clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(r: f64) -> Transition {
        Transition {
            obs: vec![],
            action: vec![],
            reward: r,
            next_obs: vec![],
            done: false,
            truncated: false,
            success: false,
            achieved_goal: None,
            desired_goal: None,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(t(i as f64));
        }
        assert_eq!(b.len(), 3);
        let mut rs: Vec<f64> = b.items.iter().map(|x| x.reward).collect();
        rs.sort_by(f64::total_cmp);
        assert_eq!(rs, vec![2.0, 3.0, 4.0]);
    }
}
