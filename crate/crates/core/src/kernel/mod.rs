//! Kernel-specific sampler steps for the three block models, plus the pieces
//! they share: the latent-edge representation, the multi-chain fit driver,
//! and per-sweep diagnostics.

pub mod czinb;
pub mod zinb;
pub mod zip;

use serde::{Deserialize, Serialize};

use crate::chain::{ChainMeta, ChainStore, DrawRecord, ParamsDraw};
use crate::dist;
use crate::error::{Error, Result};
use crate::net::AdjacencyMatrix;
use crate::partition::PartitionState;
use crate::rng::RngStream;

/// Latent decomposition of an observed weight: `A_ij = w_ij * (1 - x_ij)`
/// with `x_ij` flagging a structural zero and `w_ij` the latent interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEdges {
    n: usize,
    x: Vec<u8>,
    w: Vec<u64>,
}

impl LatentEdges {
    pub fn zeros(n: usize) -> Self {
        LatentEdges { n, x: vec![0; n * n], w: vec![0; n * n] }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn x(&self, i: usize, j: usize) -> u64 {
        self.x[i * self.n + j] as u64
    }

    #[inline]
    pub fn w(&self, i: usize, j: usize) -> u64 {
        self.w[i * self.n + j]
    }

    pub fn set_pair(&mut self, i: usize, j: usize, x: bool, w: u64) {
        debug_assert_ne!(i, j);
        let (a, b) = (i * self.n + j, j * self.n + i);
        self.x[a] = x as u8;
        self.x[b] = x as u8;
        self.w[a] = w;
        self.w[b] = w;
    }

    /// Check `A_ij = w_ij (1 - x_ij)` on every pair.
    pub fn consistent_with(&self, a: &AdjacencyMatrix) -> bool {
        let n = self.n;
        (0..n).all(|i| {
            ((i + 1)..n).all(|j| {
                let implied = if self.x(i, j) == 1 { 0 } else { self.w(i, j) };
                implied == a.get(i, j)
            })
        })
    }

    pub fn x_total(&self) -> u64 {
        (0..self.n)
            .flat_map(|i| ((i + 1)..self.n).map(move |j| (i, j)))
            .map(|(i, j)| self.x(i, j))
            .sum()
    }

    pub fn w_total(&self) -> u64 {
        (0..self.n)
            .flat_map(|i| ((i + 1)..self.n).map(move |j| (i, j)))
            .map(|(i, j)| self.w(i, j))
            .sum()
    }
}

/// Probability that an observed zero is a structural zero:
/// `theta = p / (psi^r (1 - p) + p)`.
pub fn structural_zero_prob(p: f64, psi: f64, r: f64) -> f64 {
    p / (psi.powf(r) * (1.0 - p) + p)
}

/// Impute one pair's latent edge given the observed weight and the local
/// ZINB parameters.
pub fn impute_latent_pair(
    observed: u64,
    p: f64,
    psi: f64,
    r: f64,
    rng: &mut RngStream,
) -> (bool, u64) {
    if observed > 0 {
        return (false, observed);
    }
    if dist::sample_bernoulli(structural_zero_prob(p, psi, r), rng) {
        (true, dist::sample_neg_binomial(psi, r, rng))
    } else {
        (false, 0)
    }
}

/// Counters accumulated over a fit; exposed in the chain summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub gamma_proposals: u64,
    pub gamma_accepts: u64,
    pub dispersion_proposals: u64,
    pub dispersion_accepts: u64,
    pub component_cap_hits: u64,
    pub label_moves: u64,
}

impl Diagnostics {
    pub fn merge(&mut self, other: &Diagnostics) {
        self.gamma_proposals += other.gamma_proposals;
        self.gamma_accepts += other.gamma_accepts;
        self.dispersion_proposals += other.dispersion_proposals;
        self.dispersion_accepts += other.dispersion_accepts;
        self.component_cap_hits += other.component_cap_hits;
        self.label_moves += other.label_moves;
    }
}

/// Robbins-Monro step on a log proposal scale toward the target acceptance
/// rate; only called during burn-in.
pub(crate) fn adapt_log_sd(log_sd: &mut f64, accepted: bool, step: u64, target: f64) {
    let gain = (step.max(1) as f64).powf(-0.6);
    *log_sd += gain * ((accepted as u8 as f64) - target);
    *log_sd = log_sd.clamp(-6.0, 3.0);
}

/// Per-sweep context handed to the kernel by the fit driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCtx {
    /// Proposal-scale adaptation is active (burn-in only).
    pub adapt: bool,
    /// Power on the data part of the collapsed label weights. Ramped from
    /// near zero to one over the first half of burn-in and pinned at one
    /// afterwards; values below one flatten the label field so early
    /// accidental block merges dissolve instead of hardening.
    pub label_temper: f64,
}

impl SweepCtx {
    pub fn exact() -> Self {
        SweepCtx { adapt: false, label_temper: 1.0 }
    }
}

/// Iteration schedule of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSchedule {
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub chains: u32,
    pub seed: u64,
    /// Enable the tempered-label burn-in ramp.
    pub tempered_burn_in: bool,
}

impl FitSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thinning == 0 {
            return Err(Error::config("thinning must be at least 1"));
        }
        if self.chains == 0 {
            return Err(Error::config("need at least one chain"));
        }
        Ok(())
    }

    pub fn kept_per_chain(&self) -> u64 {
        (self.iterations - self.burn_in).div_ceil(self.thinning)
    }

    pub fn ctx_for(&self, iter: u64) -> SweepCtx {
        let adapt = iter < self.burn_in;
        let label_temper = if self.tempered_burn_in && self.burn_in > 0 {
            let ramp = (self.burn_in / 2).max(1);
            ((iter + 1) as f64 / ramp as f64).min(1.0)
        } else {
            1.0
        };
        SweepCtx { adapt, label_temper }
    }
}

/// One sampler: initialization, a full Gibbs sweep, and draw extraction.
/// Implementations own references to the data; per-chain mutable state lives
/// in `State` so chains can run concurrently off one kernel.
pub trait BlockKernel: Sync {
    type State: Send;

    fn model_name(&self) -> &'static str;
    fn init(&self, rng: &mut RngStream) -> Result<Self::State>;
    fn sweep(&self, state: &mut Self::State, ctx: &SweepCtx, rng: &mut RngStream) -> Result<()>;
    fn partition<'s>(&self, state: &'s Self::State) -> &'s PartitionState;
    fn params_draw(&self, state: &Self::State) -> ParamsDraw;
    fn diagnostics(&self, state: &Self::State) -> Diagnostics;
}

/// Run the configured number of chains and collect kept draws. Chains use
/// stream ids `0..chains` of the master seed and are reproducible
/// individually; records are concatenated in chain order.
pub fn run_chains<K: BlockKernel>(kernel: &K, schedule: &FitSchedule) -> Result<ChainStore> {
    schedule.validate()?;
    let chain_results: Vec<Result<(Vec<DrawRecord>, Diagnostics)>> = (0..schedule.chains)
        .map(|chain| run_single_chain(kernel, schedule, chain))
        .collect();
    let mut records = Vec::new();
    let mut diag = Diagnostics::default();
    for res in chain_results {
        let (recs, d) = res?;
        records.extend(recs);
        diag.merge(&d);
    }
    let meta = ChainMeta {
        model: kernel.model_name().to_string(),
        seed: schedule.seed,
        iterations: schedule.iterations,
        burn_in: schedule.burn_in,
        thinning: schedule.thinning,
        chains: schedule.chains,
        config_hash: 0,
    };
    Ok(ChainStore::new(meta, records, diag))
}

fn run_single_chain<K: BlockKernel>(
    kernel: &K,
    schedule: &FitSchedule,
    chain: u32,
) -> Result<(Vec<DrawRecord>, Diagnostics)> {
    let mut rng = RngStream::new(schedule.seed, chain as u64);
    let mut state = kernel.init(&mut rng)?;
    let mut records = Vec::with_capacity(schedule.kept_per_chain() as usize);
    for iter in 0..schedule.iterations {
        let ctx = schedule.ctx_for(iter);
        kernel.sweep(&mut state, &ctx, &mut rng)?;
        if iter >= schedule.burn_in && (iter - schedule.burn_in) % schedule.thinning == 0 {
            let part = kernel.partition(&state);
            records.push(DrawRecord {
                iteration: iter,
                chain,
                labels: part.z.iter().map(|&l| l as u32).collect(),
                num_components: part.num_components as u32,
                num_occupied: part.num_occupied() as u32,
                concentration: part.concentration,
                params: kernel.params_draw(&state),
            });
        }
    }
    Ok((records, kernel.diagnostics(&state)))
}
