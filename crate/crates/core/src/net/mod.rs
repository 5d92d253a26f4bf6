//! Network and covariate data model, synthetic generators, and edge masking.

pub mod io;

use crate::dist::{self, logistic, ZinbParams};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Symmetric nonnegative-integer adjacency matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    n: usize,
    entries: Vec<u64>,
}

impl AdjacencyMatrix {
    pub fn zeros(n: usize) -> Self {
        AdjacencyMatrix { n, entries: vec![0; n * n] }
    }

    /// Validate and adopt a dense row-major matrix.
    pub fn from_dense(n: usize, entries: Vec<u64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::data(format!(
                "dense matrix has {} entries, expected {n}x{n}",
                entries.len()
            )));
        }
        for i in 0..n {
            if entries[i * n + i] != 0 {
                return Err(Error::data(format!(
                    "self-loop: nonzero diagonal entry at node {}",
                    i + 1
                )));
            }
            for j in (i + 1)..n {
                if entries[i * n + j] != entries[j * n + i] {
                    return Err(Error::data(format!(
                        "asymmetric input: A[{},{}] = {} but A[{},{}] = {}",
                        i + 1,
                        j + 1,
                        entries[i * n + j],
                        j + 1,
                        i + 1,
                        entries[j * n + i]
                    )));
                }
            }
        }
        Ok(AdjacencyMatrix { n, entries })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.entries[i * self.n + j]
    }

    pub fn set_pair(&mut self, i: usize, j: usize, w: u64) {
        assert_ne!(i, j, "self-loops are not representable");
        self.entries[i * self.n + j] = w;
        self.entries[j * self.n + i] = w;
    }

    /// Unordered pairs `(i, j)` with `i < j` and a nonzero weight.
    pub fn nonzero_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.get(i, j) > 0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn num_pairs(&self) -> usize {
        self.n * (self.n - 1) / 2
    }
}

/// Index of unordered pair `(i, j)`, `i < j`, in row-major pair order.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    a * n - a * (a + 1) / 2 + (b - a) - 1
}

/// Dense per-pair covariate storage: a `q`-vector for every unordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTensor {
    n: usize,
    q: usize,
    values: Vec<f64>,
    /// Per-column `(mean, sd)` recorded when the tensor was standardized.
    pub standardization: Option<Vec<(f64, f64)>>,
}

impl CovariateTensor {
    pub fn from_values(n: usize, q: usize, values: Vec<f64>) -> Result<Self> {
        let expect = n * (n - 1) / 2 * q;
        if values.len() != expect {
            return Err(Error::data(format!(
                "covariate tensor needs {expect} values for n={n}, q={q}, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite covariate value"));
        }
        Ok(CovariateTensor { n, q, values, standardization: None })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> &[f64] {
        let idx = pair_index(self.n, i, j) * self.q;
        &self.values[idx..idx + self.q]
    }

    /// Center and scale each covariate column to mean 0, sample sd 1, recording
    /// the transform so coefficients can be mapped back to the raw scale.
    pub fn standardized(&self) -> Self {
        let pairs = self.n * (self.n - 1) / 2;
        let mut transform = Vec::with_capacity(self.q);
        let mut values = self.values.clone();
        for col in 0..self.q {
            let mean =
                (0..pairs).map(|p| self.values[p * self.q + col]).sum::<f64>() / pairs as f64;
            let ss = (0..pairs)
                .map(|p| (self.values[p * self.q + col] - mean).powi(2))
                .sum::<f64>();
            let sd = (ss / (pairs as f64 - 1.0)).sqrt();
            let sd = if sd > 0.0 { sd } else { 1.0 };
            for p in 0..pairs {
                values[p * self.q + col] = (self.values[p * self.q + col] - mean) / sd;
            }
            transform.push((mean, sd));
        }
        CovariateTensor { n: self.n, q: self.q, values, standardization: Some(transform) }
    }

    /// Append a constant-one column (after any standardization).
    pub fn with_intercept(&self) -> Self {
        let pairs = self.n * (self.n - 1) / 2;
        let q = self.q + 1;
        let mut values = Vec::with_capacity(pairs * q);
        for p in 0..pairs {
            values.extend_from_slice(&self.values[p * self.q..(p + 1) * self.q]);
            values.push(1.0);
        }
        let standardization = self
            .standardization
            .as_ref()
            .map(|t| t.iter().copied().chain(std::iter::once((0.0, 1.0))).collect());
        CovariateTensor { n: self.n, q, values, standardization }
    }
}

/// The unordered pairs hidden from a training matrix, with their true weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    entries: Vec<(usize, usize, u64)>,
}

impl MaskSet {
    pub fn new(entries: Vec<(usize, usize, u64)>) -> Self {
        MaskSet { entries }
    }

    pub fn entries(&self) -> &[(usize, usize, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Restore the masked entries onto a training matrix.
    pub fn restore(&self, a_train: &AdjacencyMatrix) -> AdjacencyMatrix {
        let mut a = a_train.clone();
        for &(i, j, w) in &self.entries {
            a.set_pair(i, j, w);
        }
        a
    }
}

/// Generating parameters of a synthetic network.
#[derive(Debug, Clone, PartialEq)]
pub enum TrueKernel {
    /// Block ZINB with within/between parameter pairs.
    Zinb { within: ZinbParams, between: ZinbParams },
    /// Block ZIP with within/between `(p, lambda)` pairs.
    Zip { within: (f64, f64), between: (f64, f64) },
    /// Covariate ZINB; coefficients indexed `[s][block_pair][coord]` with
    /// `s = 0` driving the count component and `s = 1` the zero inflation.
    Czinb { beta: [Vec<Vec<f64>>; 2], r: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub labels: Vec<usize>,
    pub num_communities: usize,
    pub kernel: TrueKernel,
}

/// Simulation scenario: scenario 1 draws block ZINB weights with strong
/// overdispersion, scenario 2 draws block ZIP weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    ZinbBlocks,
    ZipBlocks,
}

impl Scenario {
    pub fn from_number(s: u32) -> Result<Self> {
        match s {
            1 => Ok(Scenario::ZinbBlocks),
            2 => Ok(Scenario::ZipBlocks),
            other => Err(Error::config(format!("unknown scenario {other}; expected 1 or 2"))),
        }
    }
}

const SCENARIO_K: usize = 3;

fn scenario_zinb(same_block: bool) -> ZinbParams {
    if same_block {
        ZinbParams { p: 0.1, psi: 0.1, r: 5.0 }
    } else {
        ZinbParams { p: 0.7, psi: 0.2, r: 3.0 }
    }
}

fn scenario_zip(same_block: bool) -> (f64, f64) {
    if same_block {
        (0.1, 3.0)
    } else {
        (0.7, 1.5)
    }
}

/// Draw a benchmark network: balanced categorical labels over three
/// communities, then independent block-kernel weights for every pair.
pub fn generate_scenario(
    scenario: Scenario,
    n: usize,
    rng: &mut RngStream,
) -> Result<(AdjacencyMatrix, GroundTruth)> {
    if n < SCENARIO_K {
        return Err(Error::config(format!("need at least {SCENARIO_K} nodes, got {n}")));
    }
    let labels: Vec<usize> =
        (0..n).map(|_| (rng.next_f64() * SCENARIO_K as f64) as usize).collect();
    let mut a = AdjacencyMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let same = labels[i] == labels[j];
            let w = match scenario {
                Scenario::ZinbBlocks => dist::sample_zinb(&scenario_zinb(same), rng),
                Scenario::ZipBlocks => {
                    let (p, lambda) = scenario_zip(same);
                    if dist::sample_bernoulli(p, rng) {
                        0
                    } else {
                        dist::sample_poisson(lambda, rng)
                    }
                }
            };
            a.set_pair(i, j, w);
        }
    }
    let kernel = match scenario {
        Scenario::ZinbBlocks => {
            TrueKernel::Zinb { within: scenario_zinb(true), between: scenario_zinb(false) }
        }
        Scenario::ZipBlocks => {
            TrueKernel::Zip { within: scenario_zip(true), between: scenario_zip(false) }
        }
    };
    Ok((a, GroundTruth { labels, num_communities: SCENARIO_K, kernel }))
}

/// Law of the synthetic pairwise covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovariateLaw {
    /// Every coordinate i.i.d. standard normal.
    #[default]
    StandardNormal,
    /// First coordinate fixed at one (an intercept, letting blocks differ in
    /// baseline density), remaining coordinates standard normal.
    InterceptPlusNormal,
}

/// Draw a covariate-driven ZINB network. `beta[s][pair_idx]` are block-pair
/// coefficient vectors over the upper triangle in `(0,0), (0,1), ..` order.
pub fn generate_czinb_network(
    n: usize,
    q: usize,
    num_communities: usize,
    beta_count: &[Vec<f64>],
    beta_zero: &[Vec<f64>],
    r: f64,
    law: CovariateLaw,
    rng: &mut RngStream,
) -> Result<(AdjacencyMatrix, CovariateTensor, GroundTruth)> {
    let blocks = num_communities * (num_communities + 1) / 2;
    if beta_count.len() != blocks || beta_zero.len() != blocks {
        return Err(Error::config(format!(
            "need {blocks} coefficient vectors per link for K={num_communities}"
        )));
    }
    if beta_count.iter().chain(beta_zero.iter()).any(|b| b.len() != q) {
        return Err(Error::config("coefficient vector length must equal q"));
    }
    if !(r > 0.0) {
        return Err(Error::config("dispersion r must be positive"));
    }
    let labels: Vec<usize> =
        (0..n).map(|_| (rng.next_f64() * num_communities as f64) as usize).collect();
    let pairs = n * (n - 1) / 2;
    let mut values = Vec::with_capacity(pairs * q);
    for _ in 0..pairs {
        for coord in 0..q {
            let v = match law {
                CovariateLaw::StandardNormal => dist::sample_normal(0.0, 1.0, rng),
                CovariateLaw::InterceptPlusNormal => {
                    if coord == 0 {
                        1.0
                    } else {
                        dist::sample_normal(0.0, 1.0, rng)
                    }
                }
            };
            values.push(v);
        }
    }
    let cov = CovariateTensor::from_values(n, q, values)?;

    let block_idx = |l: usize, m: usize| {
        let (a, b) = if l <= m { (l, m) } else { (m, l) };
        a * num_communities - a * (a + 1) / 2 + b
    };
    let mut a = AdjacencyMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let y = cov.pair(i, j);
            let bi = block_idx(labels[i], labels[j]);
            let eta1: f64 = y.iter().zip(&beta_count[bi]).map(|(a, b)| a * b).sum();
            let eta2: f64 = y.iter().zip(&beta_zero[bi]).map(|(a, b)| a * b).sum();
            let psi = logistic(eta1);
            let p = logistic(eta2);
            let w = if dist::sample_bernoulli(p, rng) {
                0
            } else {
                dist::sample_neg_binomial(psi.clamp(1e-12, 1.0 - 1e-12), r, rng)
            };
            a.set_pair(i, j, w);
        }
    }
    let kernel = TrueKernel::Czinb { beta: [beta_count.to_vec(), beta_zero.to_vec()], r };
    Ok((a, cov, GroundTruth { labels, num_communities, kernel }))
}

/// Zero out `round(fraction * #nonzero-pairs)` randomly chosen nonzero pairs
/// (round half up), returning the training matrix and the mask.
pub fn mask_nonzero(
    a: &AdjacencyMatrix,
    fraction: f64,
    rng: &mut RngStream,
) -> Result<(AdjacencyMatrix, MaskSet)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::config(format!("mask fraction {fraction} not in [0, 1)")));
    }
    let mut nonzero = a.nonzero_pairs();
    let count = (fraction * nonzero.len() as f64 + 0.5).floor() as usize;
    // Partial Fisher-Yates over the deterministic row-major pair list.
    let total = nonzero.len();
    let mut picked = Vec::with_capacity(count);
    for step in 0..count {
        let pick = step + (rng.next_f64() * (total - step) as f64) as usize;
        nonzero.swap(step, pick);
        picked.push(nonzero[step]);
    }
    let mut train = a.clone();
    let mut entries = Vec::with_capacity(count);
    for (i, j) in picked {
        entries.push((i, j, a.get(i, j)));
        train.set_pair(i, j, 0);
    }
    entries.sort_unstable();
    Ok((train, MaskSet::new(entries)))
}
