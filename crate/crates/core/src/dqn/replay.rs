use rand::Rng;

use crate::error::{Error, Result};

/// Binary sum tree over a power-of-two number of leaves; supports O(log n)
/// updates and prefix-sum lookups.
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

    pub fn set(&mut self, i: usize, value: f64) {
        let mut node = self.leaves + i;
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Leaf whose cumulative interval contains `mass`, for `0 <= mass < total`.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = self.nodes[2 * node];
            if mass < left || self.nodes[2 * node + 1] <= 0.0 {
                node *= 2;
            } else {
                mass -= left;
                node = 2 * node + 1;
            }
        }
        node - self.leaves
    }
}

/// One stored agent-MDP interaction with flattened, normalized states. The
/// reward is the discounted return collected until the next critical state.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f32>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f32>,
    /// Terminal transitions do not bootstrap.
    pub done: bool,
    /// Bootstrap factor applied to the next-state value: `gamma^k` for a
    /// transition spanning `k` environment steps.
    pub discount: f64,
}

#[derive(Debug, Clone)]
pub struct SampledBatch {
    pub indices: Vec<usize>,
    /// Importance-sampling weights scaled so the batch maximum is 1.
    pub weights: Vec<f64>,
}

/// Proportional prioritized replay buffer with ring-buffer eviction.
#[derive(Debug, Clone)]
pub struct PrioritizedBuffer {
    capacity: usize,
    alpha: f64,
    eps: f64,
    items: Vec<Transition>,
    next: usize,
    tree: SumTree,
    raw: Vec<f64>,
    max_priority: f64,
}

impl PrioritizedBuffer {
    pub fn new(capacity: usize, alpha: f64, eps: f64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            alpha,
            eps,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            tree: SumTree::new(capacity),
            raw: vec![0.0; capacity],
            max_priority: 1.0,
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

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Stores `t` with the largest priority seen so far.
    pub fn push(&mut self, t: Transition) -> usize {
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[slot] = t;
        }
        self.raw[slot] = self.max_priority;
        self.tree.set(slot, self.max_priority.powf(self.alpha));
        self.next = (slot + 1) % self.capacity;
        slot
    }

    pub fn priority(&self, i: usize) -> f64 {
        self.raw[i]
    }

    /// Sets the raw priority `p_i` (before the `alpha` exponent).
    pub fn set_priority(&mut self, i: usize, p: f64) {
        assert!(i < self.items.len());
        self.max_priority = self.max_priority.max(p);
        self.raw[i] = p;
        self.tree.set(i, p.powf(self.alpha));
    }

    /// `p_i = |delta_i| + eps` for each sampled index.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) {
        for (&i, &d) in indices.iter().zip(td_errors) {
            self.set_priority(i, d.abs() + self.eps);
        }
    }

    /// Sampling probability `p_i^alpha / sum_j p_j^alpha`.
    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    /// `batch` independent proportional draws with importance weights
    /// `(N P(i))^-beta`, normalized by the batch maximum.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, beta: f64, rng: &mut R) -> Result<SampledBatch> {
        if self.items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let total = self.tree.total();
        let n = self.items.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for _ in 0..batch {
            let i = self.tree.find(rng.random::<f64>() * total).min(self.items.len() - 1);
            indices.push(i);
            weights.push((n * self.tree.get(i) / total).powf(-beta));
        }
        let max = weights.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            weights.iter_mut().for_each(|w| *w /= max);
        }
        Ok(SampledBatch { indices, weights })
    }
}
