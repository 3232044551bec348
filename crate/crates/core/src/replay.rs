//! Prioritized experience replay backed by a sum tree.

use rand::Rng;

use crate::error::{Error, Result};
use crate::render::ObservationStack;

pub const DEFAULT_ALPHA: f64 = 0.6;
pub const DEFAULT_PRIORITY_EPS: f64 = 1e-3;

/// Complete binary tree of partial sums over `capacity` leaves.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    /// Sets a leaf and recomputes its ancestors from their children, so no
    /// rounding error accumulates across updates.
    pub fn set(&mut self, i: usize, value: f64) {
        let mut n = self.leaves + i;
        self.nodes[n] = value;
        while n > 1 {
            n /= 2;
            self.nodes[n] = self.nodes[2 * n] + self.nodes[2 * n + 1];
        }
    }

    /// Leaf whose cumulative range contains `mass`. Never returns a
    /// zero-weight leaf while the total is positive.
    pub fn find(&self, mass: f64) -> usize {
        let mut mass = mass.clamp(0.0, self.total());
        let mut n = 1;
        while n < self.leaves {
            let left = self.nodes[2 * n];
            if mass < left || self.nodes[2 * n + 1] <= 0.0 {
                n *= 2;
            } else {
                mass -= left;
                n = 2 * n + 1;
            }
        }
        n - self.leaves
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: ObservationStack,
    pub action: usize,
    pub reward: f64,
    pub next_state: ObservationStack,
    pub done: bool,
}

/// A sampled batch: buffer indices and normalized importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer<T = Transition> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
    tree: SumTree,
    /// Raw priorities, before the `alpha` exponent.
    priorities: Vec<f64>,
    pub alpha: f64,
    pub priority_eps: f64,
    max_priority: f64,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize, alpha: f64, priority_eps: f64) -> Result<Self> {
        if capacity == 0 || alpha < 0.0 || priority_eps <= 0.0 {
            return Err(Error::Config("replay needs capacity > 0, alpha >= 0, eps > 0".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            tree: SumTree::new(capacity),
            priorities: Vec::new(),
            alpha,
            priority_eps,
            max_priority: 1.0,
        })
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

    pub fn get(&self, i: usize) -> &T {
        &self.items[i]
    }

    pub fn priority(&self, i: usize) -> f64 {
        self.priorities[i]
    }

    /// Probability of drawing item `i`.
    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    pub fn tree_total(&self) -> f64 {
        self.tree.total()
    }

    /// Inserts with the largest priority seen so far, overwriting the
    /// oldest item when full.
    pub fn push(&mut self, item: T) -> usize {
        let i = self.next;
        if self.items.len() < self.capacity {
            self.items.push(item);
            self.priorities.push(0.0);
        } else {
            self.items[i] = item;
        }
        self.store_priority(i, self.max_priority);
        self.next = (self.next + 1) % self.capacity;
        i
    }

    fn store_priority(&mut self, i: usize, p: f64) {
        let p = p.max(self.priority_eps);
        self.priorities[i] = p;
        self.tree.set(i, p.powf(self.alpha));
    }

    /// Sets a priority directly (floored at the epsilon).
    pub fn set_priority(&mut self, i: usize, p: f64) {
        self.store_priority(i, p);
        self.max_priority = self.max_priority.max(self.priorities[i]);
    }

    /// Draws `batch` indices with probability proportional to priority^alpha.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, beta: f64, rng: &mut R) -> Result<Sample> {
        if self.items.len() < batch || batch == 0 {
            return Err(Error::Underfilled {
                len: self.items.len(),
                needed: batch.max(1),
            });
        }
        let n = self.items.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for _ in 0..batch {
            let i = self.draw(rng);
            indices.push(i);
            weights.push((n * self.probability(i)).powf(-beta));
        }
        let max_w = weights.iter().copied().fold(0.0, f64::max);
        for w in &mut weights {
            *w /= max_w;
        }
        Ok(Sample { indices, weights })
    }

    /// One index drawn with probability proportional to priority^alpha.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = self.tree.find(rng.random::<f64>() * self.tree.total());
        i.min(self.items.len().saturating_sub(1))
    }

    /// New priorities `|td| + eps` for sampled items.
    pub fn update(&mut self, indices: &[usize], td_errors: &[f64]) {
        for (&i, td) in indices.iter().zip(td_errors) {
            self.set_priority(i, td.abs() + self.priority_eps);
        }
    }
}

/// Linear anneal of the importance exponent from `start` to 1.
pub fn beta_at(start: f64, progress: f64) -> f64 {
    start + (1.0 - start) * progress.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn degenerate_distribution() {
        let mut buf = ReplayBuffer::<u32>::new(16, 1.0, 1e-9).unwrap();
        for k in 0..16 {
            buf.push(k);
        }
        buf.update(&(0..16).collect::<Vec<_>>(), &[0.0; 16]);
        buf.set_priority(0, 1.0);
        let mut r = seeded(1);
        let zeros = (0..1000).filter(|_| buf.draw(&mut r) == 0).count();
        assert!(zeros >= 999);
    }

    #[test]
    fn zero_td_floors_at_eps() {
        let mut buf = ReplayBuffer::<u32>::new(4, 0.6, 1e-3).unwrap();
        buf.push(1);
        buf.update(&[0], &[0.0]);
        assert_eq!(buf.priority(0), 1e-3);
    }

    #[test]
    fn underfilled_sampling_fails() {
        let mut buf = ReplayBuffer::<u32>::new(4, 0.6, 1e-3).unwrap();
        buf.push(1);
        assert!(matches!(buf.sample(2, 0.4, &mut seeded(0)), Err(Error::Underfilled { .. })));
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::<u32>::new(3, 0.6, 1e-3).unwrap();
        for k in 0..5 {
            buf.push(k);
        }
        assert_eq!(buf.len(), 3);
        assert_eq!((*buf.get(0), *buf.get(1), *buf.get(2)), (3, 4, 2));
    }

    #[test]
    fn doubling_priority_doubles_frequency() {
        let mut buf = ReplayBuffer::<u32>::new(10, 1.0, 1e-6).unwrap();
        for k in 0..10 {
            buf.push(k);
        }
        buf.update(&(0..10).collect::<Vec<_>>(), &[1.0; 10]);
        buf.set_priority(3, 2.0 + 1e-6);
        let draws = 100_000;
        let mut r = seeded(7);
        let count = (0..draws).filter(|_| buf.draw(&mut r) == 3).count() as f64;
        let p = 2.0 / 11.0;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((count - draws as f64 * p).abs() < 3.0 * sigma, "{count}");
    }

    #[test]
    fn weights_are_normalized() {
        let mut buf = ReplayBuffer::<u32>::new(8, 0.6, 1e-3).unwrap();
        for k in 0..8 {
            buf.push(k);
            buf.set_priority(k as usize, 1.0 + k as f64);
        }
        let s = buf.sample(8, 0.5, &mut seeded(3)).unwrap();
        let max = s.weights.iter().copied().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
        assert!(s.weights.iter().all(|w| *w > 0.0 && *w <= 1.0));
    }

    proptest! {
        #[test]
        fn root_is_sum_of_leaves(updates in proptest::collection::vec((0usize..37, 0.0..10.0f64), 1..200)) {
            let mut t = SumTree::new(37);
            let mut leaves = vec![0.0; 37];
            for (i, v) in updates {
                t.set(i, v);
                leaves[i] = v;
            }
            let brute: f64 = leaves.iter().sum();
            prop_assert!((t.total() - brute).abs() <= 1e-9 * brute.max(1.0));
        }
    }
}
