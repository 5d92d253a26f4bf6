//! Zero-inflated Poisson baseline on the same telescoping scaffolding as the
//! ZINB kernel, with fully conjugate block updates.
//!
//! The latent scheme keeps Poisson factors only for the non-structural-zero
//! pairs: given the indicators, the observed weight of an `x = 0` pair *is*
//! its count draw, so the block-level Poisson statistics are the observed
//! weight sums and the `x = 0` pair counts. Structural-zero pairs still get a
//! `w ~ Poisson(lambda)` imputation to keep the `A = w(1-x)` representation
//! (and posterior predictive draws) intact, but those values never feed the
//! label or rate conditionals.

use crate::chain::ParamsDraw;
use crate::dist::{sample_beta, sample_bernoulli, sample_categorical_from_log, sample_gamma,
    sample_poisson, ln_gamma_fn};
use crate::dmfm::{self, DmfmConfig};
use crate::error::{Error, Result};
use crate::net::AdjacencyMatrix;
use crate::partition::{pair_count_from, BlockStats, PartitionState, SymMat};
use crate::rng::RngStream;

use super::{BlockKernel, Diagnostics, LatentEdges, SweepCtx};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipPriors {
    pub a_p: f64,
    pub b_p: f64,
    pub a_lambda: f64,
    pub b_lambda: f64,
}

impl Default for ZipPriors {
    fn default() -> Self {
        ZipPriors { a_p: 1.0, b_p: 1.0, a_lambda: 1.0, b_lambda: 1.0 }
    }
}

impl ZipPriors {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.a_p, self.b_p, self.a_lambda, self.b_lambda];
        if vals.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config("ZIP prior hyperparameters must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZipBlockParams {
    pub p: SymMat<f64>,
    pub lambda: SymMat<f64>,
}

impl ZipBlockParams {
    /// Prior draw of every block parameter (used by the joint-distribution
    /// tests' forward sampler).
    pub fn from_priors(k: usize, priors: &ZipPriors, rng: &mut RngStream) -> Self {
        Self::prior_draw(k, priors, rng)
    }

    fn prior_draw(k: usize, priors: &ZipPriors, rng: &mut RngStream) -> Self {
        let mut out = ZipBlockParams { p: SymMat::new(k), lambda: SymMat::new(k) };
        for l in 0..k {
            for m in l..k {
                out.p.set(l, m, sample_beta(priors.a_p, priors.b_p, rng));
                out.lambda.set(l, m, sample_gamma(priors.a_lambda, priors.b_lambda, rng));
            }
        }
        out
    }

    fn permuted(&self, perm: &[usize]) -> Self {
        ZipBlockParams { p: self.p.permuted(perm), lambda: self.lambda.permuted(perm) }
    }

    fn resized(&self, k: usize) -> Self {
        ZipBlockParams { p: self.p.resized(k, 0.5), lambda: self.lambda.resized(k, 1.0) }
    }
}

/// Per-chain state. `observed` starts as a copy of the data; the
/// joint-distribution harness regenerates it in place.
#[derive(Debug, Clone)]
pub struct ZipState {
    pub partition: PartitionState,
    pub params: ZipBlockParams,
    pub latent: LatentEdges,
    /// Block stats over (x_ij, A_ij): `x` totals and observed weight sums.
    pub stats: BlockStats,
    pub observed: AdjacencyMatrix,
    pub diag: Diagnostics,
    gamma_log_sd: f64,
    adapt_steps: u64,
}

pub struct ZipSampler<'d> {
    data: &'d AdjacencyMatrix,
    pub priors: ZipPriors,
    pub dmfm: DmfmConfig,
    pub init_components: usize,
    pub random_scan: bool,
}

impl<'d> ZipSampler<'d> {
    pub fn new(data: &'d AdjacencyMatrix, priors: ZipPriors, dmfm: DmfmConfig) -> Result<Self> {
        priors.validate()?;
        dmfm.validate()?;
        if data.num_nodes() < 2 {
            return Err(Error::config("need at least two nodes"));
        }
        Ok(ZipSampler { data, priors, dmfm, init_components: 10, random_scan: false })
    }

    fn recompute_stats(&self, st: &mut ZipState) {
        st.stats = BlockStats::compute(
            &st.partition.z,
            st.partition.num_components,
            &|i, j| st.latent.x(i, j),
            &|i, j| st.observed.get(i, j),
        )
        .expect("labels in range");
    }

    pub(crate) fn step_auxiliary(&self, st: &mut ZipState, rng: &mut RngStream) -> Result<()> {
        st.partition.aux_u = dmfm::sample_auxiliary_u(
            st.observed.num_nodes(),
            st.partition.total_weight(),
            rng,
        )?;
        Ok(())
    }

    pub(crate) fn step_labels(
        &self,
        st: &mut ZipState,
        temper: f64,
        rng: &mut RngStream,
    ) -> Result<()> {
        let n = st.observed.num_nodes();
        let k_total = st.partition.num_components;
        let ln_s: Vec<f64> = st.partition.weights.iter().map(|s| s.ln()).collect();

        let mut order: Vec<usize> = (0..n).collect();
        if self.random_scan {
            for step in 0..n.saturating_sub(1) {
                let pick = step + (rng.next_f64() * (n - step) as f64) as usize;
                order.swap(step, pick);
            }
        }

        let mut inc_x = vec![0u64; k_total];
        let mut inc_a = vec![0u64; k_total];
        let mut logw = vec![0.0f64; k_total];
        for &i in &order {
            inc_x.iter_mut().for_each(|v| *v = 0);
            inc_a.iter_mut().for_each(|v| *v = 0);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let m = st.partition.z[j];
                inc_x[m] += st.latent.x(i, j);
                inc_a[m] += st.observed.get(i, j);
            }
            let from = st.partition.z[i];
            st.stats.remove_node(from, &inc_x, &inc_a);

            node_label_log_weights_zip(&st.stats, &inc_x, &inc_a, &ln_s, &self.priors, &mut logw)?;
            if temper != 1.0 {
                for lw in logw.iter_mut() {
                    *lw *= temper;
                }
            }

            let to = sample_categorical_from_log(&logw, rng)?;
            st.stats.add_node(to, &inc_x, &inc_a);
            st.partition.move_node(i, to);
            if to != from {
                st.diag.label_moves += 1;
            }
        }
        Ok(())
    }

    /// Conjugate draws: `p_lm ~ Beta(x+a_p, n-x+b_p)` and
    /// `lambda_lm ~ Gamma(a_l + sum A, b_l + #(x=0 pairs))`.
    pub(crate) fn step_block_params(&self, st: &mut ZipState, rng: &mut RngStream) {
        let k = st.partition.num_components;
        for l in 0..k {
            for m in l..k {
                let n_lm = st.stats.pair_count(l, m) as f64;
                let x_lm = st.stats.x.get(l, m) as f64;
                let a_lm = st.stats.w.get(l, m) as f64;
                let p = sample_beta(x_lm + self.priors.a_p, n_lm - x_lm + self.priors.b_p, rng);
                let lambda = sample_gamma(
                    self.priors.a_lambda + a_lm,
                    self.priors.b_lambda + (n_lm - x_lm),
                    rng,
                );
                st.params.p.set(l, m, p);
                st.params.lambda.set(l, m, lambda);
            }
        }
    }

    /// Latent update: structural-zero indicators for observed zeros, plus the
    /// no-feedback Poisson imputation for flagged pairs.
    pub(crate) fn step_latent(&self, st: &mut ZipState, rng: &mut RngStream) {
        let n = st.observed.num_nodes();
        let k = st.partition.num_components;
        let theta = SymMat::from_fn(k, |l, m| {
            let p = st.params.p.get(l, m);
            let lambda = st.params.lambda.get(l, m);
            p / ((-lambda).exp() * (1.0 - p) + p)
        });
        for i in 0..n {
            for j in (i + 1)..n {
                let a_ij = st.observed.get(i, j);
                if a_ij > 0 {
                    st.latent.set_pair(i, j, false, a_ij);
                    continue;
                }
                let (l, m) = (st.partition.z[i], st.partition.z[j]);
                if sample_bernoulli(theta.get(l, m), rng) {
                    let w = sample_poisson(st.params.lambda.get(l, m), rng);
                    st.latent.set_pair(i, j, true, w);
                } else {
                    st.latent.set_pair(i, j, false, 0);
                }
            }
        }
        self.recompute_stats(st);
    }

    pub(crate) fn step_concentration(&self, st: &mut ZipState, adapt: bool, rng: &mut RngStream) {
        let (gamma, accepted) = dmfm::update_concentration(
            st.partition.concentration,
            st.partition.aux_u,
            &st.partition.occupied_counts(),
            st.partition.num_components,
            st.gamma_log_sd.exp(),
            rng,
        );
        st.partition.concentration = gamma;
        st.diag.gamma_proposals += 1;
        st.diag.gamma_accepts += accepted as u64;
        if adapt {
            st.adapt_steps += 1;
            adapt_log_sd_local(&mut st.gamma_log_sd, accepted, st.adapt_steps);
        }
    }

    pub(crate) fn relabel(&self, st: &mut ZipState) {
        if let Some(perm) = st.partition.canonical_permutation() {
            st.partition.apply_permutation(&perm);
            st.params = st.params.permuted(&perm);
            st.stats = st.stats.permuted(&perm);
        }
    }

    pub(crate) fn step_components_weights(
        &self,
        st: &mut ZipState,
        rng: &mut RngStream,
    ) -> Result<()> {
        let occupied = st.partition.occupied_counts();
        let k = occupied.len();
        let draw = dmfm::sample_num_components(
            &occupied,
            st.partition.concentration,
            st.partition.aux_u,
            &self.dmfm,
            rng,
        )?;
        st.diag.component_cap_hits += draw.cap_hit as u64;
        let k_new = draw.value;
        if k_new != st.partition.num_components {
            st.partition.resize_components(k_new, || 1.0);
            st.params = st.params.resized(k_new);
            st.stats = st.stats.resized(k_new);
        }
        st.partition.weights = dmfm::sample_unnormalized_weights(
            st.partition.occupancy(),
            st.partition.concentration,
            k_new,
            st.partition.aux_u,
            rng,
        );
        for l in 0..k_new {
            for m in l.max(k)..k_new {
                st.params.p.set(l, m, sample_beta(self.priors.a_p, self.priors.b_p, rng));
                st.params.lambda.set(
                    l,
                    m,
                    sample_gamma(self.priors.a_lambda, self.priors.b_lambda, rng),
                );
            }
        }
        Ok(())
    }

    pub(crate) fn sweep_given_latents(&self, st: &mut ZipState, rng: &mut RngStream) -> Result<()> {
        self.step_auxiliary(st, rng)?;
        self.step_labels(st, 1.0, rng)?;
        self.step_block_params(st, rng);
        self.step_concentration(st, false, rng);
        self.relabel(st);
        self.step_components_weights(st, rng)
    }

    /// Regenerate `(x, A)` from the generative model for the
    /// joint-distribution harness.
    pub(crate) fn regenerate_latents_from_model(&self, st: &mut ZipState, rng: &mut RngStream) {
        let n = st.observed.num_nodes();
        for i in 0..n {
            for j in (i + 1)..n {
                let (l, m) = (st.partition.z[i], st.partition.z[j]);
                let x = sample_bernoulli(st.params.p.get(l, m), rng);
                let w = sample_poisson(st.params.lambda.get(l, m), rng);
                let a_ij = if x { 0 } else { w };
                st.observed.set_pair(i, j, a_ij);
                st.latent.set_pair(i, j, x, w);
            }
        }
        self.recompute_stats(st);
    }

    pub fn init_state(&self, rng: &mut RngStream) -> Result<ZipState> {
        let n = self.data.num_nodes();
        let k0 = self.init_components.clamp(1, n);
        let gamma = 1.0;
        let z: Vec<usize> = (0..n).map(|_| (rng.next_f64() * k0 as f64) as usize).collect();
        let weights: Vec<f64> =
            (0..k0).map(|_| sample_gamma(gamma / k0 as f64, 1.0, rng).max(1e-300)).collect();
        let partition = PartitionState::new(z, k0, weights, 1.0, gamma)?;
        let params = ZipBlockParams::prior_draw(k0, &self.priors, rng);
        let mut st = ZipState {
            partition,
            params,
            latent: LatentEdges::zeros(n),
            stats: BlockStats::compute(&vec![0; n], 1, &|_, _| 0, &|_, _| 0).unwrap(),
            observed: self.data.clone(),
            diag: Diagnostics::default(),
            gamma_log_sd: self.dmfm.gamma_proposal_sd.ln(),
            adapt_steps: 0,
        };
        self.step_latent(&mut st, rng);
        Ok(st)
    }
}

fn adapt_log_sd_local(log_sd: &mut f64, accepted: bool, step: u64) {
    super::adapt_log_sd(log_sd, accepted, step, 0.44);
}

/// Poisson-Gamma marginal exponent: `log Gamma(a_l + asum) - (a_l + asum)
/// log(b_l + pairs)`; the label weight takes ratios of these per block.
fn poisson_gamma_term(asum: f64, pairs: f64, priors: &ZipPriors) -> f64 {
    let shape = priors.a_lambda + asum;
    ln_gamma_fn(shape) - shape * (priors.b_lambda + pairs).ln()
}

/// Collapsed label log-weights for one node (stats already exclude it).
pub(crate) fn node_label_log_weights_zip(
    stats: &BlockStats,
    inc_x: &[u64],
    inc_a: &[u64],
    ln_s: &[f64],
    priors: &ZipPriors,
    logw: &mut [f64],
) -> Result<()> {
    use statrs::function::beta::ln_beta;
    let k_total = ln_s.len();
    let occ = stats.occupancy();
    for c in 0..k_total {
        let mut lw = ln_s[c];
        for m in 0..k_total {
            let dn = occ[m];
            if dn == 0 {
                continue;
            }
            let x_loo = stats.x.get(c, m) as f64;
            let a_loo = stats.w.get(c, m) as f64;
            let n_loo = pair_count_from(occ, c, m) as f64;
            let dx = inc_x[m] as f64;
            let da = inc_a[m] as f64;
            let n_new = n_loo + dn as f64;
            lw += ln_beta(x_loo + dx + priors.a_p, n_new - (x_loo + dx) + priors.b_p)
                - ln_beta(x_loo + priors.a_p, n_loo - x_loo + priors.b_p);
            let q_loo = n_loo - x_loo;
            let q_new = n_new - (x_loo + dx);
            lw += poisson_gamma_term(a_loo + da, q_new, priors)
                - poisson_gamma_term(a_loo, q_loo, priors);
        }
        if !lw.is_finite() {
            return Err(Error::invariant(format!(
                "non-finite ZIP label weight for candidate block {c}"
            )));
        }
        logw[c] = lw;
    }
    Ok(())
}

impl<'d> BlockKernel for ZipSampler<'d> {
    type State = ZipState;

    fn model_name(&self) -> &'static str {
        "zip"
    }

    fn init(&self, rng: &mut RngStream) -> Result<ZipState> {
        self.init_state(rng)
    }

    fn sweep(&self, st: &mut ZipState, ctx: &SweepCtx, rng: &mut RngStream) -> Result<()> {
        self.step_auxiliary(st, rng)?;
        self.step_labels(st, ctx.label_temper, rng)?;
        self.step_block_params(st, rng);
        self.step_latent(st, rng);
        self.step_concentration(st, ctx.adapt, rng);
        self.relabel(st);
        self.step_components_weights(st, rng)
    }

    fn partition<'s>(&self, st: &'s ZipState) -> &'s PartitionState {
        &st.partition
    }

    fn params_draw(&self, st: &ZipState) -> ParamsDraw {
        let k = st.partition.num_occupied();
        let mut p = Vec::with_capacity(k * (k + 1) / 2);
        let mut lambda = Vec::with_capacity(k * (k + 1) / 2);
        for l in 0..k {
            for m in l..k {
                p.push(st.params.p.get(l, m));
                lambda.push(st.params.lambda.get(l, m));
            }
        }
        ParamsDraw::Zip { p, lambda }
    }

    fn diagnostics(&self, st: &ZipState) -> Diagnostics {
        st.diag
    }
}
