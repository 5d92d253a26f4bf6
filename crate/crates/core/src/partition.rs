//! Partition state, block-pair sufficient statistics, and relabeling.
//!
//! The telescoping sampler distinguishes the number of components `K` from the
//! number of occupied components `k`; empty components are kept around and may
//! capture nodes during the label sweep. All kernels share [`PartitionState`]
//! for the label/weight side and [`BlockStats`] for the per-block-pair totals
//! that drive collapsed label updates and conjugate draws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric `K x K` matrix stored as its upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMat<T> {
    k: usize,
    data: Vec<T>,
}

impl<T: Clone> SymMat<T> {
    pub fn from_elem(k: usize, elem: T) -> Self {
        SymMat { k, data: vec![elem; k * (k + 1) / 2] }
    }

    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(k * (k + 1) / 2);
        for l in 0..k {
            for j in l..k {
                data.push(f(l, j));
            }
        }
        SymMat { k, data }
    }

    pub fn size(&self) -> usize {
        self.k
    }

    #[inline]
    fn idx(&self, l: usize, m: usize) -> usize {
        let (a, b) = if l <= m { (l, m) } else { (m, l) };
        debug_assert!(b < self.k);
        a * self.k - a * (a + 1) / 2 + b
    }

    #[inline]
    pub fn get_ref(&self, l: usize, m: usize) -> &T {
        &self.data[self.idx(l, m)]
    }

    #[inline]
    pub fn get_mut(&mut self, l: usize, m: usize) -> &mut T {
        let i = self.idx(l, m);
        &mut self.data[i]
    }

    #[inline]
    pub fn set(&mut self, l: usize, m: usize, v: T) {
        let i = self.idx(l, m);
        self.data[i] = v;
    }

    /// Copy into a matrix of size `new_k`; entries outside the old range are
    /// filled with `fill`.
    pub fn resized(&self, new_k: usize, fill: T) -> Self {
        let mut out = SymMat::from_elem(new_k, fill);
        let keep = self.k.min(new_k);
        for l in 0..keep {
            for m in l..keep {
                out.set(l, m, self.get_ref(l, m).clone());
            }
        }
        out
    }

    /// Apply a label permutation: entry `(l, m)` moves to `(perm[l], perm[m])`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for l in 0..self.k {
            for m in l..self.k {
                out.set(perm[l], perm[m], self.get_ref(l, m).clone());
            }
        }
        out
    }
}

impl<T: Copy + Default> SymMat<T> {
    pub fn new(k: usize) -> Self {
        SymMat::from_elem(k, T::default())
    }
}

impl<T: Copy> SymMat<T> {
    #[inline]
    pub fn get(&self, l: usize, m: usize) -> T {
        self.data[self.idx(l, m)]
    }

    pub fn iter_upper(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.k).flat_map(move |l| (l..self.k).map(move |m| (l, m, self.get(l, m))))
    }
}

/// Mutable label vector with component weights and the DMFM auxiliary state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionState {
    /// Community label of each node, in `0..num_components`.
    pub z: Vec<usize>,
    /// Total number of components `K`, occupied or not.
    pub num_components: usize,
    /// Unnormalized component weights `S`, length `K`.
    pub weights: Vec<f64>,
    /// Auxiliary variable `u` tied to the weight normalization.
    pub aux_u: f64,
    /// Dirichlet concentration `gamma`.
    pub concentration: f64,
    occupancy: Vec<u64>,
}

impl PartitionState {
    pub fn new(
        z: Vec<usize>,
        num_components: usize,
        weights: Vec<f64>,
        aux_u: f64,
        concentration: f64,
    ) -> Result<Self> {
        if weights.len() != num_components {
            return Err(Error::data("weights length must equal component count"));
        }
        if z.iter().any(|&l| l >= num_components) {
            return Err(Error::data("label out of component range"));
        }
        if weights.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invariant("component weights must be positive"));
        }
        let mut occupancy = vec![0u64; num_components];
        for &l in &z {
            occupancy[l] += 1;
        }
        Ok(PartitionState { z, num_components, weights, aux_u, concentration, occupancy })
    }

    pub fn num_nodes(&self) -> usize {
        self.z.len()
    }

    pub fn occupancy(&self) -> &[u64] {
        &self.occupancy
    }

    /// Number of occupied components `k`.
    pub fn num_occupied(&self) -> usize {
        self.occupancy.iter().filter(|&&c| c > 0).count()
    }

    /// Occupancy counts of the occupied components, in label order.
    pub fn occupied_counts(&self) -> Vec<u64> {
        self.occupancy.iter().copied().filter(|&c| c > 0).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn move_node(&mut self, node: usize, to: usize) {
        let from = self.z[node];
        if from == to {
            return;
        }
        self.occupancy[from] -= 1;
        self.occupancy[to] += 1;
        self.z[node] = to;
    }

    /// Permutation sending occupied labels to `0..k` in order of first
    /// appearance in `z`, and empty labels to `k..K` in their original order.
    /// Returns `None` when the state is already canonical.
    pub fn canonical_permutation(&self) -> Option<Vec<usize>> {
        let k_total = self.num_components;
        let mut perm = vec![usize::MAX; k_total];
        let mut next = 0usize;
        for &l in &self.z {
            if perm[l] == usize::MAX {
                perm[l] = next;
                next += 1;
            }
        }
        for slot in perm.iter_mut() {
            if *slot == usize::MAX {
                *slot = next;
                next += 1;
            }
        }
        debug_assert_eq!(next, k_total);
        if perm.iter().enumerate().all(|(old, &new)| old == new) {
            None
        } else {
            Some(perm)
        }
    }

    /// Apply a label permutation (`perm[old] = new`) to labels, weights, and
    /// occupancy. Block-indexed parameter matrices must be permuted alongside
    /// by the caller via [`SymMat::permuted`].
    pub fn apply_permutation(&mut self, perm: &[usize]) {
        for l in self.z.iter_mut() {
            *l = perm[*l];
        }
        let mut weights = vec![0.0; self.num_components];
        let mut occupancy = vec![0u64; self.num_components];
        for old in 0..self.num_components {
            weights[perm[old]] = self.weights[old];
            occupancy[perm[old]] = self.occupancy[old];
        }
        self.weights = weights;
        self.occupancy = occupancy;
    }

    /// Grow or shrink to `new_k` components. Shrinking is only valid when the
    /// dropped components are empty (callers relabel canonically first).
    pub fn resize_components(&mut self, new_k: usize, mut fresh_weight: impl FnMut() -> f64) {
        assert!(
            self.occupancy.iter().skip(new_k).all(|&c| c == 0),
            "cannot drop occupied components"
        );
        self.weights.truncate(new_k);
        self.occupancy.truncate(new_k);
        while self.weights.len() < new_k {
            self.weights.push(fresh_weight());
            self.occupancy.push(0);
        }
        self.num_components = new_k;
    }
}

/// Per-block-pair totals: connection indicators `x`, latent interactions `w`.
/// Pair counts `n_lm` derive from the occupancy vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStats {
    pub x: SymMat<u64>,
    pub w: SymMat<u64>,
    occupancy: Vec<u64>,
}

impl BlockStats {
    /// Exact totals from scratch. `pair_x` and `pair_w` report the latent
    /// indicator and interaction for an unordered pair `(i, j)`, `i != j`.
    pub fn compute(
        z: &[usize],
        num_components: usize,
        pair_x: &impl Fn(usize, usize) -> u64,
        pair_w: &impl Fn(usize, usize) -> u64,
    ) -> Result<Self> {
        if z.iter().any(|&l| l >= num_components) {
            return Err(Error::data("label out of component range"));
        }
        let n = z.len();
        let mut x = SymMat::new(num_components);
        let mut w = SymMat::new(num_components);
        let mut occupancy = vec![0u64; num_components];
        for &l in z {
            occupancy[l] += 1;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                *x.get_mut(z[i], z[j]) += pair_x(i, j);
                *w.get_mut(z[i], z[j]) += pair_w(i, j);
            }
        }
        Ok(BlockStats { x, w, occupancy })
    }

    pub fn num_components(&self) -> usize {
        self.x.size()
    }

    pub fn occupancy(&self) -> &[u64] {
        &self.occupancy
    }

    /// Number of unordered node pairs in block `(l, m)`.
    pub fn pair_count(&self, l: usize, m: usize) -> u64 {
        pair_count_from(&self.occupancy, l, m)
    }

    /// Remove node `i`'s incident contributions. `inc_x[m]` and `inc_w[m]`
    /// are the sums of the pair values between `i` and the nodes currently
    /// labeled `m` (exclusive of `i` itself); `label` is `i`'s current label.
    pub fn remove_node(&mut self, label: usize, inc_x: &[u64], inc_w: &[u64]) {
        for m in 0..self.num_components() {
            *self.x.get_mut(label, m) -= inc_x[m];
            *self.w.get_mut(label, m) -= inc_w[m];
        }
        self.occupancy[label] -= 1;
    }

    /// Inverse of [`BlockStats::remove_node`] with a possibly different label.
    pub fn add_node(&mut self, label: usize, inc_x: &[u64], inc_w: &[u64]) {
        for m in 0..self.num_components() {
            *self.x.get_mut(label, m) += inc_x[m];
            *self.w.get_mut(label, m) += inc_w[m];
        }
        self.occupancy[label] += 1;
    }

    /// Resize to `new_k` components (new blocks start empty).
    pub fn resized(&self, new_k: usize) -> Self {
        let mut occupancy = self.occupancy.clone();
        occupancy.resize(new_k, 0);
        BlockStats { x: self.x.resized(new_k, 0), w: self.w.resized(new_k, 0), occupancy }
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut occupancy = vec![0u64; self.occupancy.len()];
        for old in 0..self.occupancy.len() {
            occupancy[perm[old]] = self.occupancy[old];
        }
        BlockStats { x: self.x.permuted(perm), w: self.w.permuted(perm), occupancy }
    }
}

#[inline]
pub fn pair_count_from(occupancy: &[u64], l: usize, m: usize) -> u64 {
    if l == m {
        occupancy[l] * occupancy[l].saturating_sub(1) / 2
    } else {
        occupancy[l] * occupancy[m]
    }
}

/// Statistics with node `i` removed, for testing against the incremental path.
pub fn leave_one_out(
    stats: &BlockStats,
    node: usize,
    z: &[usize],
    pair_x: &impl Fn(usize, usize) -> u64,
    pair_w: &impl Fn(usize, usize) -> u64,
) -> BlockStats {
    let k = stats.num_components();
    let (inc_x, inc_w) = incident_sums(node, z, k, pair_x, pair_w);
    let mut out = stats.clone();
    out.remove_node(z[node], &inc_x, &inc_w);
    out
}

/// Per-destination-block sums of node `i`'s incident pair values.
pub fn incident_sums(
    node: usize,
    z: &[usize],
    num_components: usize,
    pair_x: &impl Fn(usize, usize) -> u64,
    pair_w: &impl Fn(usize, usize) -> u64,
) -> (Vec<u64>, Vec<u64>) {
    let mut inc_x = vec![0u64; num_components];
    let mut inc_w = vec![0u64; num_components];
    for j in 0..z.len() {
        if j == node {
            continue;
        }
        inc_x[z[j]] += pair_x(node, j);
        inc_w[z[j]] += pair_w(node, j);
    }
    (inc_x, inc_w)
}
