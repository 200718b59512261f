//! Binary sum-tree over a fixed number of leaves.
//!
//! Internal node `i` holds `tree[2i] + tree[2i + 1]`; leaves start at index
//! `width`, a power of two. Updates recompute the path to the root from the
//! children rather than adding deltas, so the root always equals the sum of
//! the current leaves taken in tree order.

#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    width: usize,
    len: usize,
    tree: Vec<f64>,
}

impl SumTree {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "sum tree needs at least one leaf");
        let width = len.next_power_of_two();
        Self {
            width,
            len,
            tree: vec![0.0; 2 * width],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total(&self) -> f64 {
        self.tree[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.tree[self.width + leaf]
    }

    pub fn leaves(&self) -> &[f64] {
        &self.tree[self.width..self.width + self.len]
    }

    pub fn set(&mut self, leaf: usize, value: f64) {
        assert!(leaf < self.len, "leaf {leaf} out of range");
        assert!(value >= 0.0 && value.is_finite(), "priority must be finite and >= 0");
        let mut i = self.width + leaf;
        self.tree[i] = value;
        while i > 1 {
            i /= 2;
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1];
        }
    }

    /// Leaf whose cumulative-sum interval contains `mass`, for `mass` in
    /// `[0, total)`. Zero-priority leaves are never returned while the
    /// total is positive.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut i = 1;
        while i < self.width {
            let left = 2 * i;
            if mass < self.tree[left] || self.tree[left + 1] == 0.0 {
                i = left;
            } else {
                mass -= self.tree[left];
                i = left + 1;
            }
        }
        let leaf = i - self.width;
        if leaf >= self.len || self.tree[i] == 0.0 {
            // Rounding pushed us onto an empty leaf; fall back to the last
            // populated leaf on the left.
            return (0..self.len.min(leaf + 1))
                .rev()
                .find(|&j| self.get(j) > 0.0)
                .unwrap_or(0);
        }
        leaf
    }

    /// Root of a tree rebuilt from scratch over the same leaves.
    pub fn recomputed_total(&self) -> f64 {
        let mut fresh = SumTree::new(self.len);
        fresh.tree[fresh.width..fresh.width + self.len].copy_from_slice(self.leaves());
        for i in (1..fresh.width).rev() {
            fresh.tree[i] = fresh.tree[2 * i] + fresh.tree[2 * i + 1];
        }
        fresh.total()
    }
}
