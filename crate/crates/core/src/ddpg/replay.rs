//! Proportional prioritized experience replay.
//!
//! Priorities are `|td_error| + epsilon` (linear, no exponent). Sampling is
//! stratified: the total priority mass is cut into `batch_size` equal
//! segments and one point is drawn uniformly in each. Importance weights
//! `(N * P(i))^-beta` are divided by the batch maximum.

use rand::Rng;

use super::sum_tree::SumTree;
use crate::error::{Error, Result};
use crate::mdp::Transition;

pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Buffer position plus the write generation it was sampled at, so
/// priority updates for since-overwritten entries can be dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleIndex {
    pub slot: usize,
    pub generation: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub indices: Vec<SampleIndex>,
    pub transitions: Vec<Transition>,
    pub weights: Vec<f64>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Unit weights and dummy indices, for driving updates without a buffer.
    pub fn uniform(transitions: Vec<Transition>) -> Self {
        let n = transitions.len();
        Self {
            indices: (0..n)
                .map(|slot| SampleIndex { slot, generation: 0 })
                .collect(),
            transitions,
            weights: vec![1.0; n],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    tree: SumTree,
    entries: Vec<Transition>,
    generations: Vec<u64>,
    next: usize,
    pushes: u64,
    epsilon: f64,
    beta: f64,
    max_priority: f64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, epsilon: f64, beta: f64) -> Self {
        assert!(capacity > 0);
        assert!(epsilon > 0.0);
        assert!((0.0..=1.0).contains(&beta));
        Self {
            capacity,
            tree: SumTree::new(capacity),
            entries: Vec::with_capacity(capacity),
            generations: Vec::with_capacity(capacity),
            next: 0,
            pushes: 0,
            epsilon,
            beta,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    pub fn total_priority(&self) -> f64 {
        self.tree.total()
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn priority(&self, slot: usize) -> f64 {
        self.tree.get(slot)
    }

    pub fn entries(&self) -> &[Transition] {
        &self.entries
    }

    /// Write position of the next push and the number of pushes so far.
    pub fn cursor(&self) -> (usize, u64) {
        (self.next, self.pushes)
    }

    /// Stores `tr` with the largest priority seen so far; overwrites the
    /// oldest entry once full.
    pub fn push(&mut self, tr: Transition) {
        let slot = self.next;
        self.pushes += 1;
        if self.entries.len() < self.capacity {
            self.entries.push(tr);
            self.generations.push(self.pushes);
        } else {
            self.entries[slot] = tr;
            self.generations[slot] = self.pushes;
        }
        self.tree.set(slot, self.max_priority);
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<SampledBatch> {
        let n = self.len();
        if batch_size == 0 || n < batch_size {
            return Err(Error::Underfull {
                len: n,
                needed: batch_size.max(1),
            });
        }
        let total = self.tree.total();
        let segment = total / batch_size as f64;
        let mut indices = Vec::with_capacity(batch_size);
        let mut transitions = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        for i in 0..batch_size {
            let u: f64 = rng.random();
            let mass = ((i as f64 + u) * segment).min(total);
            let slot = self.tree.find(mass);
            let p = self.tree.get(slot) / total;
            indices.push(SampleIndex {
                slot,
                generation: self.generations[slot],
            });
            transitions.push(self.entries[slot]);
            weights.push((n as f64 * p).powf(-self.beta));
        }
        let w_max = weights.iter().cloned().fold(f64::MIN, f64::max);
        weights.iter_mut().for_each(|w| *w /= w_max);
        Ok(SampledBatch {
            indices,
            transitions,
            weights,
        })
    }

    /// Sets each sampled entry's priority to `|td| + epsilon`. Entries
    /// overwritten since sampling are skipped.
    pub fn update_priorities(&mut self, indices: &[SampleIndex], td_errors: &[f64]) {
        assert_eq!(indices.len(), td_errors.len());
        for (idx, td) in indices.iter().zip(td_errors) {
            if idx.slot >= self.len() || self.generations[idx.slot] != idx.generation {
                continue;
            }
            let p = td.abs() + self.epsilon;
            if !p.is_finite() {
                continue;
            }
            self.tree.set(idx.slot, p);
            self.max_priority = self.max_priority.max(p);
        }
    }

    /// Rebuilds a buffer from saved parts.
    pub(crate) fn restore(
        capacity: usize,
        epsilon: f64,
        beta: f64,
        max_priority: f64,
        next: usize,
        pushes: u64,
        items: Vec<(Transition, f64, u64)>,
    ) -> Result<Self> {
        if items.len() > capacity || next >= capacity {
            return Err(Error::Checkpoint("replay buffer layout out of range".into()));
        }
        let mut buf = Self::new(capacity, epsilon, beta);
        buf.max_priority = max_priority;
        buf.next = next;
        buf.pushes = pushes;
        for (i, (tr, p, generation)) in items.into_iter().enumerate() {
            buf.entries.push(tr);
            buf.generations.push(generation);
            buf.tree.set(i, p);
        }
        Ok(buf)
    }

    pub(crate) fn generation(&self, slot: usize) -> u64 {
        self.generations[slot]
    }
}
