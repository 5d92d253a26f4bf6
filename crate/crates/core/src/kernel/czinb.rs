//! Covariate-dependent ZINB sampler: block-specific logistic regressions for
//! the zero-inflation and count-success probabilities, made conditionally
//! Gaussian by Pólya-Gamma augmentation, with a single global dispersion.
//!
//! For each block pair and each of the two links the sampler maintains the
//! q x q information matrix `M = B0^{-1} + sum omega y y'` and the vector
//! `v = B0^{-1} b0 + sum kappa y` over the block's pairs. The collapsed label
//! weight needs only `-1/2 log|M| + 1/2 v' M^{-1} v` per block, and the
//! regression draw is `N(M^{-1} v, M^{-1})`. Label moves update `M`, `v` by
//! rank-q corrections; the Pólya-Gamma refresh rebuilds them from scratch.

use nalgebra::{DMatrix, DVector};

use crate::chain::ParamsDraw;
use crate::dist::{
    ln_gamma_fn, logistic, propose_log_normal, sample_categorical_from_log, sample_gamma,
    sample_normal, sample_polya_gamma,
};
use crate::dmfm::{self, DmfmConfig};
use crate::error::{Error, Result};
use crate::net::{pair_index, AdjacencyMatrix, CovariateTensor};
use crate::partition::{PartitionState, SymMat};
use crate::rng::RngStream;

use super::{adapt_log_sd, impute_latent_pair, BlockKernel, Diagnostics, LatentEdges, SweepCtx};

/// Gaussian prior on the regression coefficients (`N(b0 * 1, b0_scale * I)`)
/// plus the global dispersion prior and its proposal scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CzinbPriors {
    pub b0: f64,
    pub b0_scale: f64,
    pub a_r: f64,
    pub b_r: f64,
    pub r_proposal_sd: f64,
}

impl Default for CzinbPriors {
    fn default() -> Self {
        CzinbPriors { b0: 0.0, b0_scale: 10.0, a_r: 1.0, b_r: 1.0, r_proposal_sd: 0.2 }
    }
}

impl CzinbPriors {
    pub fn validate(&self) -> Result<()> {
        if !(self.b0_scale > 0.0 && self.b0_scale.is_finite()) {
            return Err(Error::config("prior covariance scale must be positive"));
        }
        if !(self.a_r > 0.0 && self.b_r > 0.0 && self.r_proposal_sd > 0.0) {
            return Err(Error::config("dispersion prior parameters must be positive"));
        }
        Ok(())
    }
}

/// Index of the link whose linear predictor drives the count success
/// probability `psi` (the latent interaction intensity).
pub const LINK_COUNT: usize = 0;
/// Index of the link driving the zero-inflation probability `p`.
pub const LINK_ZERO: usize = 1;

/// `(psi_ij, p_ij)` from the two linear predictors.
pub fn logistic_links(y: &[f64], beta_count: &DVector<f64>, beta_zero: &DVector<f64>) -> (f64, f64) {
    let eta1: f64 = y.iter().zip(beta_count.iter()).map(|(a, b)| a * b).sum();
    let eta2: f64 = y.iter().zip(beta_zero.iter()).map(|(a, b)| a * b).sum();
    (logistic(eta1), logistic(eta2))
}

/// Conditional mean and covariance `(M^{-1} v, M^{-1})` of one block's
/// coefficient vector given its information pair.
pub fn gaussian_posterior(m: &DMatrix<f64>, v: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = m.clone().cholesky().ok_or_else(|| {
        Error::invariant(format!(
            "information matrix not positive definite (diagonal {:?})",
            (0..m.nrows()).map(|i| m[(i, i)]).collect::<Vec<_>>()
        ))
    })?;
    let mean = chol.solve(v);
    let cov = chol.inverse();
    Ok((mean, cov))
}

/// `-1/2 log|M| + 1/2 v' M^{-1} v`, the log of the collapsed Gaussian factor
/// `|B|^{1/2} exp(b' B^{-1} b / 2)` expressed through the information pair.
fn gaussian_log_factor(m: &DMatrix<f64>, v: &DVector<f64>) -> Result<f64> {
    let chol = m.clone().cholesky().ok_or_else(|| {
        Error::invariant("information matrix lost positive definiteness".to_string())
    })?;
    let mut logdet = 0.0;
    let l = chol.l_dirty();
    for i in 0..m.nrows() {
        logdet += l[(i, i)].ln();
    }
    let x = chol.solve(v);
    Ok(-logdet + 0.5 * v.dot(&x))
}

#[derive(Debug, Clone)]
pub struct CzinbState {
    pub partition: PartitionState,
    /// Coefficient vectors per block pair, `[LINK_COUNT, LINK_ZERO]`.
    pub beta: [SymMat<DVector<f64>>; 2],
    /// Global dispersion.
    pub r: f64,
    pub latent: LatentEdges,
    /// Pólya-Gamma draws per unordered pair, one vector per link.
    pub omega: [Vec<f64>; 2],
    info_m: [SymMat<DMatrix<f64>>; 2],
    info_v: [SymMat<DVector<f64>>; 2],
    pub diag: Diagnostics,
    r_log_sd: f64,
    gamma_log_sd: f64,
    adapt_steps: u64,
}

pub struct CzinbSampler<'d> {
    data: &'d AdjacencyMatrix,
    covariates: &'d CovariateTensor,
    pub priors: CzinbPriors,
    pub dmfm: DmfmConfig,
    pub init_components: usize,
    pub random_scan: bool,
    /// Initialize labels from a short covariate-free fit, then adapt the
    /// regression side with labels clamped before releasing the scan. Without
    /// this the early co-adaptation of dispersion and augmentation routinely
    /// locks random starts into fragmented partitions.
    pub warm_start: bool,
    pub warm_iterations: u64,
    pub clamp_iterations: u64,
    prior_info_m: DMatrix<f64>,
    prior_info_v: DVector<f64>,
    b0_vec: DVector<f64>,
}

impl<'d> CzinbSampler<'d> {
    pub fn new(
        data: &'d AdjacencyMatrix,
        covariates: &'d CovariateTensor,
        priors: CzinbPriors,
        dmfm: DmfmConfig,
    ) -> Result<Self> {
        priors.validate()?;
        dmfm.validate()?;
        if data.num_nodes() < 2 {
            return Err(Error::config("need at least two nodes"));
        }
        if covariates.num_nodes() != data.num_nodes() {
            return Err(Error::config(format!(
                "covariates cover {} nodes but the network has {}",
                covariates.num_nodes(),
                data.num_nodes()
            )));
        }
        let q = covariates.dim();
        let prior_info_m = DMatrix::identity(q, q) / priors.b0_scale;
        let b0_vec = DVector::from_element(q, priors.b0);
        let prior_info_v = &prior_info_m * &b0_vec;
        Ok(CzinbSampler {
            data,
            covariates,
            priors,
            dmfm,
            init_components: 10,
            random_scan: false,
            warm_start: true,
            warm_iterations: 400,
            clamp_iterations: 150,
            prior_info_m,
            prior_info_v,
            b0_vec,
        })
    }

    pub fn dim(&self) -> usize {
        self.covariates.dim()
    }

    fn kappa(&self, st: &CzinbState, i: usize, j: usize, link: usize) -> f64 {
        if link == LINK_COUNT {
            (st.r - st.latent.w(i, j) as f64) / 2.0
        } else {
            st.latent.x(i, j) as f64 - 0.5
        }
    }

    /// Rebuild every block's information pair from the stored Pólya-Gamma
    /// values and latent edges.
    fn rebuild_info(&self, st: &mut CzinbState) {
        let n = self.data.num_nodes();
        let k = st.partition.num_components;
        let q = self.dim();
        for s in 0..2 {
            st.info_m[s] = SymMat::from_elem(k, self.prior_info_m.clone());
            st.info_v[s] = SymMat::from_elem(k, self.prior_info_v.clone());
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let y = self.covariates.pair(i, j);
                let (l, m) = (st.partition.z[i], st.partition.z[j]);
                let pidx = pair_index(n, i, j);
                for s in 0..2 {
                    let omega = st.omega[s][pidx];
                    let kappa = self.kappa(st, i, j, s);
                    let mat = st.info_m[s].get_mut(l, m);
                    for a in 0..q {
                        for b in 0..q {
                            mat[(a, b)] += omega * y[a] * y[b];
                        }
                    }
                    let vec = st.info_v[s].get_mut(l, m);
                    for a in 0..q {
                        vec[a] += kappa * y[a];
                    }
                }
            }
        }
    }

    pub(crate) fn step_auxiliary(&self, st: &mut CzinbState, rng: &mut RngStream) -> Result<()> {
        st.partition.aux_u =
            dmfm::sample_auxiliary_u(self.data.num_nodes(), st.partition.total_weight(), rng)?;
        Ok(())
    }

    /// Step 2: label scan with the regression coefficients collapsed and the
    /// Pólya-Gamma values held fixed.
    pub(crate) fn step_labels(
        &self,
        st: &mut CzinbState,
        temper: f64,
        rng: &mut RngStream,
    ) -> Result<()> {
        let n = self.data.num_nodes();
        let q = self.dim();
        let k_total = st.partition.num_components;
        let ln_s: Vec<f64> = st.partition.weights.iter().map(|s| s.ln()).collect();

        let mut order: Vec<usize> = (0..n).collect();
        if self.random_scan {
            for step in 0..n.saturating_sub(1) {
                let pick = step + (rng.next_f64() * (n - step) as f64) as usize;
                order.swap(step, pick);
            }
        }

        let mut delta_m: Vec<[DMatrix<f64>; 2]> = (0..k_total)
            .map(|_| [DMatrix::zeros(q, q), DMatrix::zeros(q, q)])
            .collect();
        let mut delta_v: Vec<[DVector<f64>; 2]> =
            (0..k_total).map(|_| [DVector::zeros(q), DVector::zeros(q)]).collect();
        let mut logw = vec![0.0f64; k_total];
        let mut scratch_m = DMatrix::zeros(q, q);
        let mut scratch_v = DVector::zeros(q);

        for &i in &order {
            for m in 0..k_total {
                for s in 0..2 {
                    delta_m[m][s].fill(0.0);
                    delta_v[m][s].fill(0.0);
                }
            }
            for j in 0..n {
                if j == i {
                    continue;
                }
                let mj = st.partition.z[j];
                let y = self.covariates.pair(i, j);
                let pidx = pair_index(n, i, j);
                for s in 0..2 {
                    let omega = st.omega[s][pidx];
                    let kappa = self.kappa(st, i, j, s);
                    let mat = &mut delta_m[mj][s];
                    for a in 0..q {
                        for b in 0..q {
                            mat[(a, b)] += omega * y[a] * y[b];
                        }
                    }
                    let vec = &mut delta_v[mj][s];
                    for a in 0..q {
                        vec[a] += kappa * y[a];
                    }
                }
            }

            let from = st.partition.z[i];
            // Downdate the information pairs of the blocks touching the
            // node's current label.
            for m in 0..k_total {
                for s in 0..2 {
                    *st.info_m[s].get_mut(from, m) -= &delta_m[m][s];
                    *st.info_v[s].get_mut(from, m) -= &delta_v[m][s];
                }
            }
            let mut occ = st.partition.occupancy().to_vec();
            occ[from] -= 1;

            for c in 0..k_total {
                let mut lw = ln_s[c];
                for m in 0..k_total {
                    if occ[m] == 0 {
                        continue;
                    }
                    for s in 0..2 {
                        let base_m = st.info_m[s].get_ref(c, m);
                        let base_v = st.info_v[s].get_ref(c, m);
                        scratch_m.copy_from(base_m);
                        scratch_m += &delta_m[m][s];
                        scratch_v.copy_from(base_v);
                        scratch_v += &delta_v[m][s];
                        lw += gaussian_log_factor(&scratch_m, &scratch_v).map_err(|_| {
                            Error::invariant(format!(
                                "non-finite label factor at candidate {c}, block {m}, link {s}"
                            ))
                        })?;
                        lw -= gaussian_log_factor(base_m, base_v).map_err(|_| {
                            Error::invariant(format!(
                                "non-finite leave-one-out factor at candidate {c}, block {m}, link {s}"
                            ))
                        })?;
                    }
                }
                if !lw.is_finite() {
                    return Err(Error::invariant(format!(
                        "non-finite label weight for candidate {c}"
                    )));
                }
                logw[c] = lw;
            }
            if temper != 1.0 {
                for lw in logw.iter_mut() {
                    *lw *= temper;
                }
            }

            let to = sample_categorical_from_log(&logw, rng)?;
            for m in 0..k_total {
                for s in 0..2 {
                    *st.info_m[s].get_mut(to, m) += &delta_m[m][s];
                    *st.info_v[s].get_mut(to, m) += &delta_v[m][s];
                }
            }
            st.partition.move_node(i, to);
            if to != from {
                st.diag.label_moves += 1;
            }
        }
        Ok(())
    }

    /// Step 3: draw every block's coefficient vectors from their Gaussian
    /// full conditionals (prior draws for empty blocks fall out naturally).
    pub(crate) fn step_coefficients(&self, st: &mut CzinbState, rng: &mut RngStream) -> Result<()> {
        let k = st.partition.num_components;
        let q = self.dim();
        for s in 0..2 {
            for l in 0..k {
                for m in l..k {
                    let chol = st.info_m[s].get_ref(l, m).clone().cholesky().ok_or_else(|| {
                        Error::invariant("information matrix not positive definite".to_string())
                    })?;
                    let mean = chol.solve(st.info_v[s].get_ref(l, m));
                    let z = DVector::from_fn(q, |_, _| sample_normal(0.0, 1.0, rng));
                    let lt = chol.l().transpose();
                    let noise = lt
                        .solve_upper_triangular(&z)
                        .ok_or_else(|| Error::invariant("triangular solve failed".to_string()))?;
                    st.beta[s].set(l, m, mean + noise);
                }
            }
        }
        Ok(())
    }

    /// Linear predictor of a pair under the current labels.
    fn eta(&self, st: &CzinbState, i: usize, j: usize, link: usize) -> f64 {
        let y = self.covariates.pair(i, j);
        let beta = st.beta[link].get_ref(st.partition.z[i], st.partition.z[j]);
        y.iter().zip(beta.iter()).map(|(a, b)| a * b).sum()
    }

    /// Log acceptance ratio of a global dispersion proposal.
    pub(crate) fn global_dispersion_log_ratio(&self, st: &CzinbState, r_pro: f64) -> f64 {
        let n = self.data.num_nodes();
        let r_cur = st.r;
        let mut log_alpha = 0.0;
        let mut nonzero = 0u64;
        let mut sum_log_psi = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let w = st.latent.w(i, j);
                if w > 0 {
                    let wf = w as f64;
                    log_alpha += ln_gamma_fn(wf + r_pro) - ln_gamma_fn(wf + r_cur);
                    nonzero += 1;
                }
                let psi = logistic(self.eta(st, i, j, LINK_COUNT));
                sum_log_psi += psi.max(1e-300).ln();
            }
        }
        log_alpha -= nonzero as f64 * (ln_gamma_fn(r_pro) - ln_gamma_fn(r_cur));
        log_alpha += (r_pro - r_cur) * sum_log_psi;
        log_alpha += (self.priors.a_r - 1.0) * (r_pro.ln() - r_cur.ln())
            - self.priors.b_r * (r_pro - r_cur);
        log_alpha + (r_pro.ln() - r_cur.ln())
    }

    /// Step 4: log-normal random-walk update of the global dispersion.
    pub(crate) fn step_dispersion(&self, st: &mut CzinbState, adapt: bool, rng: &mut RngStream) {
        let r_pro = propose_log_normal(st.r, st.r_log_sd.exp(), rng);
        let log_alpha = self.global_dispersion_log_ratio(st, r_pro);
        st.diag.dispersion_proposals += 1;
        let accepted = log_alpha >= 0.0 || rng.next_f64().ln() < log_alpha;
        if accepted {
            st.r = r_pro;
            st.diag.dispersion_accepts += 1;
        }
        if adapt {
            st.adapt_steps += 1;
            adapt_log_sd(&mut st.r_log_sd, accepted, st.adapt_steps, 0.44);
        }
    }

    /// Step 5a: latent edges from the pairwise link probabilities.
    pub(crate) fn step_latent(&self, st: &mut CzinbState, rng: &mut RngStream) {
        let n = self.data.num_nodes();
        for i in 0..n {
            for j in (i + 1)..n {
                let psi = logistic(self.eta(st, i, j, LINK_COUNT)).clamp(1e-12, 1.0 - 1e-12);
                let p = logistic(self.eta(st, i, j, LINK_ZERO));
                let (x, w) = impute_latent_pair(self.data.get(i, j), p, psi, st.r, rng);
                st.latent.set_pair(i, j, x, w);
            }
        }
    }

    /// Step 5b: Pólya-Gamma refresh and information rebuild.
    pub(crate) fn step_polya_gamma(&self, st: &mut CzinbState, rng: &mut RngStream) -> Result<()> {
        let n = self.data.num_nodes();
        for i in 0..n {
            for j in (i + 1)..n {
                let pidx = pair_index(n, i, j);
                let eta1 = self.eta(st, i, j, LINK_COUNT);
                let eta2 = self.eta(st, i, j, LINK_ZERO);
                let b1 = st.latent.w(i, j) as f64 + st.r;
                st.omega[LINK_COUNT][pidx] = sample_polya_gamma(b1, eta1, rng)?;
                st.omega[LINK_ZERO][pidx] = sample_polya_gamma(1.0, eta2, rng)?;
            }
        }
        self.rebuild_info(st);
        Ok(())
    }

    pub(crate) fn step_concentration(&self, st: &mut CzinbState, adapt: bool, rng: &mut RngStream) {
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
            adapt_log_sd(&mut st.gamma_log_sd, accepted, st.adapt_steps.max(1), 0.44);
        }
    }

    pub(crate) fn relabel(&self, st: &mut CzinbState) {
        if let Some(perm) = st.partition.canonical_permutation() {
            st.partition.apply_permutation(&perm);
            for s in 0..2 {
                st.beta[s] = st.beta[s].permuted(&perm);
                st.info_m[s] = st.info_m[s].permuted(&perm);
                st.info_v[s] = st.info_v[s].permuted(&perm);
            }
        }
    }

    pub(crate) fn step_components_weights(
        &self,
        st: &mut CzinbState,
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
            for s in 0..2 {
                st.beta[s] = st.beta[s].resized(k_new, self.b0_vec.clone());
                st.info_m[s] = st.info_m[s].resized(k_new, self.prior_info_m.clone());
                st.info_v[s] = st.info_v[s].resized(k_new, self.prior_info_v.clone());
            }
        }
        st.partition.weights = dmfm::sample_unnormalized_weights(
            st.partition.occupancy(),
            st.partition.concentration,
            k_new,
            st.partition.aux_u,
            rng,
        );
        // Step 10: prior draws for every block pair touching an empty
        // component.
        let sd = self.priors.b0_scale.sqrt();
        let q = self.dim();
        for s in 0..2 {
            for l in 0..k_new {
                for m in l.max(k)..k_new {
                    let draw = DVector::from_fn(q, |a, _| {
                        self.b0_vec[a] + sd * sample_normal(0.0, 1.0, rng)
                    });
                    st.beta[s].set(l, m, draw);
                }
            }
        }
        Ok(())
    }

    /// Joint-distribution testing transition: Pólya-Gamma refresh first so
    /// the collapsed label step conditions on current augmentation, then all
    /// parameter updates, with the latent edges treated as fixed data.
    pub(crate) fn sweep_given_latents(&self, st: &mut CzinbState, rng: &mut RngStream) -> Result<()> {
        self.step_polya_gamma(st, rng)?;
        self.step_auxiliary(st, rng)?;
        self.step_labels(st, 1.0, rng)?;
        self.step_coefficients(st, rng)?;
        self.step_dispersion(st, false, rng);
        self.step_concentration(st, false, rng);
        self.relabel(st);
        self.step_components_weights(st, rng)
    }

    /// Regenerate the latent edges from the generative model.
    pub(crate) fn regenerate_latents_from_model(&self, st: &mut CzinbState, rng: &mut RngStream) {
        let n = self.data.num_nodes();
        for i in 0..n {
            for j in (i + 1)..n {
                let psi = logistic(self.eta(st, i, j, LINK_COUNT)).clamp(1e-12, 1.0 - 1e-12);
                let p = logistic(self.eta(st, i, j, LINK_ZERO));
                let x = crate::dist::sample_bernoulli(p, rng);
                let w = crate::dist::sample_neg_binomial(psi, st.r, rng);
                st.latent.set_pair(i, j, x, w);
            }
        }
    }

    pub fn init_state(&self, rng: &mut RngStream) -> Result<CzinbState> {
        let mut st = self.blank_state(rng)?;
        st.r = self.moment_matched_dispersion();
        if self.warm_start {
            let labels = self.warm_labels(rng)?;
            self.debug_set_labels(&mut st, &labels);
            // Wide dispersion proposals while the regression side settles;
            // adaptation pulls the scale back in.
            st.r_log_sd = 0.5f64.ln();
            for _ in 0..self.clamp_iterations {
                self.clamped_sweep(&mut st, rng)?;
            }
            st.r_log_sd = self.priors.r_proposal_sd.ln();
        }
        Ok(st)
    }

    /// Method-of-moments dispersion from the positive observed weights:
    /// `r = m^2 / (v - m)` clamped to a sane range; 1 when the weights are
    /// underdispersed or too few.
    fn moment_matched_dispersion(&self) -> f64 {
        let n = self.data.num_nodes();
        let mut vals = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.data.get(i, j);
                if w > 0 {
                    vals.push(w as f64);
                }
            }
        }
        if vals.len() < 10 {
            return 1.0;
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
            / (vals.len() as f64 - 1.0);
        if v > m * 1.05 {
            (m * m / (v - m)).clamp(0.1, 50.0)
        } else {
            1.0
        }
    }

    /// Labels from a short covariate-free block fit on the same data.
    fn warm_labels(&self, rng: &mut RngStream) -> Result<Vec<usize>> {
        let warm = crate::kernel::zinb::ZinbSampler::new(
            self.data,
            crate::kernel::zinb::ZinbPriors::default(),
            self.dmfm.clone(),
        )?;
        let schedule = crate::kernel::FitSchedule {
            iterations: self.warm_iterations,
            burn_in: self.warm_iterations * 3 / 4,
            thinning: 1,
            chains: 1,
            seed: 0,
            tempered_burn_in: true,
        };
        let mut wst = warm.init_state(rng)?;
        for it in 0..schedule.iterations {
            let ctx = schedule.ctx_for(it);
            use crate::kernel::BlockKernel as _;
            warm.sweep(&mut wst, &ctx, rng)?;
        }
        Ok(wst.partition.z.clone())
    }

    /// One sweep with the labels held fixed: coefficients, dispersion,
    /// latents, and augmentation only.
    fn clamped_sweep(&self, st: &mut CzinbState, rng: &mut RngStream) -> Result<()> {
        self.step_coefficients(st, rng)?;
        self.step_dispersion(st, true, rng);
        self.step_latent(st, rng);
        self.step_polya_gamma(st, rng)
    }

    /// Fresh state with uniform labels, prior parameters, and one latent and
    /// augmentation pass; no warm-up.
    pub fn blank_state(&self, rng: &mut RngStream) -> Result<CzinbState> {
        let n = self.data.num_nodes();
        let q = self.dim();
        let k0 = self.init_components.clamp(1, n);
        let gamma = 1.0;
        let z: Vec<usize> = (0..n).map(|_| (rng.next_f64() * k0 as f64) as usize).collect();
        let weights: Vec<f64> =
            (0..k0).map(|_| sample_gamma(gamma / k0 as f64, 1.0, rng).max(1e-300)).collect();
        let partition = PartitionState::new(z, k0, weights, 1.0, gamma)?;
        // Start the links near neutral: full prior draws routinely give
        // |eta| > 4, whose imputed latent counts are then so large that the
        // augmentation locks the count link into a tiny-psi basin it never
        // leaves.
        let sd = 0.2;
        let beta0 = SymMat::from_fn(k0, |_, _| {
            DVector::from_fn(q, |a, _| self.b0_vec[a] + sd * sample_normal(0.0, 1.0, rng))
        });
        let beta1 = SymMat::from_fn(k0, |_, _| {
            DVector::from_fn(q, |a, _| self.b0_vec[a] + sd * sample_normal(0.0, 1.0, rng))
        });
        let pairs = n * (n - 1) / 2;
        let mut st = CzinbState {
            partition,
            beta: [beta0, beta1],
            r: 1.0,
            latent: LatentEdges::zeros(n),
            omega: [vec![0.0; pairs], vec![0.0; pairs]],
            info_m: [SymMat::from_elem(k0, self.prior_info_m.clone()),
                     SymMat::from_elem(k0, self.prior_info_m.clone())],
            info_v: [SymMat::from_elem(k0, self.prior_info_v.clone()),
                     SymMat::from_elem(k0, self.prior_info_v.clone())],
            diag: Diagnostics::default(),
            r_log_sd: self.priors.r_proposal_sd.ln(),
            gamma_log_sd: self.dmfm.gamma_proposal_sd.ln(),
            adapt_steps: 0,
        };
        self.step_latent(&mut st, rng);
        self.step_polya_gamma(&mut st, rng)?;
        Ok(st)
    }

    /// Testing support: overwrite the labels and restore every derived
    /// structure (occupancy, information pairs) to a consistent state.
    #[doc(hidden)]
    pub fn debug_set_labels(&self, st: &mut CzinbState, labels: &[usize]) {
        assert_eq!(labels.len(), st.partition.num_nodes());
        let k_needed = labels.iter().copied().max().unwrap_or(0) + 1;
        if k_needed > st.partition.num_components {
            let k = st.partition.num_components;
            st.partition.resize_components(k_needed, || 1.0);
            for s in 0..2 {
                st.beta[s] = st.beta[s].resized(k_needed, self.b0_vec.clone());
                st.info_m[s] = st.info_m[s].resized(k_needed, self.prior_info_m.clone());
                st.info_v[s] = st.info_v[s].resized(k_needed, self.prior_info_v.clone());
            }
            let _ = k;
        }
        for (node, &label) in labels.iter().enumerate() {
            st.partition.move_node(node, label);
        }
        self.rebuild_info(st);
    }

    /// Testing support: re-impute latents and augmentation under the current
    /// parameters (steps 5a-5b outside a sweep).
    #[doc(hidden)]
    pub fn debug_refresh_latents(&self, st: &mut CzinbState, rng: &mut RngStream) {
        self.step_latent(st, rng);
        self.step_polya_gamma(st, rng).unwrap();
    }

    /// Testing support: one sweep with the labels held fixed.
    #[doc(hidden)]
    pub fn debug_clamped_sweep(&self, st: &mut CzinbState, rng: &mut RngStream) -> Result<()> {
        self.clamped_sweep(st, rng)
    }

    /// Testing support: maintained information pairs vs a from-scratch
    /// rebuild; returns the largest absolute entry difference.
    #[doc(hidden)]
    pub fn debug_info_drift(&self, st: &CzinbState) -> f64 {
        let mut fresh = st.clone();
        self.rebuild_info(&mut fresh);
        let mut worst: f64 = 0.0;
        let k = st.partition.num_components;
        for s in 0..2 {
            for l in 0..k {
                for m in l..k {
                    let a = st.info_m[s].get_ref(l, m);
                    let b = fresh.info_m[s].get_ref(l, m);
                    worst = worst.max((a - b).abs().max());
                    let av = st.info_v[s].get_ref(l, m);
                    let bv = fresh.info_v[s].get_ref(l, m);
                    worst = worst.max((av - bv).abs().max());
                }
            }
        }
        worst
    }
}

impl<'d> CzinbSampler<'d> {
    /// Acceptance-test support: normalized label probabilities of one node
    /// under an explicit augmentation state.
    #[doc(hidden)]
    #[allow(clippy::too_many_arguments)]
    pub fn debug_node_label_probs(
        &self,
        z: &[usize],
        latent: &LatentEdges,
        omega: &[Vec<f64>; 2],
        r: f64,
        weights: &[f64],
        node: usize,
    ) -> Result<Vec<f64>> {
        let n = self.data.num_nodes();
        let q = self.dim();
        let k_total = weights.len();
        let mut st = self.blank_state(&mut crate::rng::RngStream::new(0, 0))?;
        st.partition = PartitionState::new(
            z.to_vec(),
            k_total,
            weights.to_vec(),
            1.0,
            1.0,
        )?;
        st.latent = latent.clone();
        st.omega = omega.clone();
        st.r = r;
        for s in 0..2 {
            st.beta[s] = SymMat::from_elem(k_total, self.b0_vec.clone());
            st.info_m[s] = SymMat::from_elem(k_total, self.prior_info_m.clone());
            st.info_v[s] = SymMat::from_elem(k_total, self.prior_info_v.clone());
        }
        self.rebuild_info(&mut st);

        // Leave-one-out downdates and per-block candidate deltas, mirroring
        // the label scan.
        let mut delta_m: Vec<[DMatrix<f64>; 2]> =
            (0..k_total).map(|_| [DMatrix::zeros(q, q), DMatrix::zeros(q, q)]).collect();
        let mut delta_v: Vec<[DVector<f64>; 2]> =
            (0..k_total).map(|_| [DVector::zeros(q), DVector::zeros(q)]).collect();
        for j in 0..n {
            if j == node {
                continue;
            }
            let mj = z[j];
            let y = self.covariates.pair(node, j);
            let pidx = pair_index(n, node, j);
            for s in 0..2 {
                let om = st.omega[s][pidx];
                let kp = self.kappa(&st, node, j, s);
                for a in 0..q {
                    for b in 0..q {
                        delta_m[mj][s][(a, b)] += om * y[a] * y[b];
                    }
                    delta_v[mj][s][a] += kp * y[a];
                }
            }
        }
        let from = z[node];
        for m in 0..k_total {
            for s in 0..2 {
                *st.info_m[s].get_mut(from, m) -= &delta_m[m][s];
                *st.info_v[s].get_mut(from, m) -= &delta_v[m][s];
            }
        }
        let mut occ = vec![0u64; k_total];
        for (idx, &l) in z.iter().enumerate() {
            if idx != node {
                occ[l] += 1;
            }
        }
        let mut logw = Vec::with_capacity(k_total);
        for c in 0..k_total {
            let mut lw = weights[c].ln();
            for m in 0..k_total {
                if occ[m] == 0 {
                    continue;
                }
                for s in 0..2 {
                    let base_m = st.info_m[s].get_ref(c, m);
                    let base_v = st.info_v[s].get_ref(c, m);
                    let cand_m = base_m + &delta_m[m][s];
                    let cand_v = base_v + &delta_v[m][s];
                    lw += gaussian_log_factor(&cand_m, &cand_v)?;
                    lw -= gaussian_log_factor(base_m, base_v)?;
                }
            }
            logw.push(lw);
        }
        let norm = crate::dist::log_sum_exp(&logw);
        Ok(logw.iter().map(|lw| (lw - norm).exp()).collect())
    }
}

impl<'d> BlockKernel for CzinbSampler<'d> {
    type State = CzinbState;

    fn model_name(&self) -> &'static str {
        "czinb"
    }

    fn init(&self, rng: &mut RngStream) -> Result<CzinbState> {
        self.init_state(rng)
    }

    fn sweep(&self, st: &mut CzinbState, ctx: &SweepCtx, rng: &mut RngStream) -> Result<()> {
        self.step_auxiliary(st, rng)?;
        self.step_labels(st, ctx.label_temper, rng)?;
        self.step_coefficients(st, rng)?;
        self.step_dispersion(st, ctx.adapt, rng);
        self.step_latent(st, rng);
        self.step_polya_gamma(st, rng)?;
        self.step_concentration(st, ctx.adapt, rng);
        self.relabel(st);
        self.step_components_weights(st, rng)
    }

    fn partition<'s>(&self, st: &'s CzinbState) -> &'s PartitionState {
        &st.partition
    }

    fn params_draw(&self, st: &CzinbState) -> ParamsDraw {
        let k = st.partition.num_occupied();
        let mut beta_count = Vec::with_capacity(k * (k + 1) / 2);
        let mut beta_zero = Vec::with_capacity(k * (k + 1) / 2);
        for l in 0..k {
            for m in l..k {
                beta_count.push(st.beta[LINK_COUNT].get_ref(l, m).iter().copied().collect());
                beta_zero.push(st.beta[LINK_ZERO].get_ref(l, m).iter().copied().collect());
            }
        }
        ParamsDraw::Czinb { beta_count, beta_zero, r: st.r }
    }

    fn diagnostics(&self, st: &CzinbState) -> Diagnostics {
        st.diag
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::nb_log_pmf;
    use crate::kernel::FitSchedule;
    use crate::net::generate_czinb_network;

    #[test]
    fn logistic_links_hand_values() {
        let bc = DVector::from_vec(vec![1.0]);
        let bz = DVector::from_vec(vec![0.0]);
        let (psi, p) = logistic_links(&[2.0], &bc, &bz);
        assert!((psi - 2f64.exp() / (1.0 + 2f64.exp())).abs() < 1e-12);
        assert!((p - 0.5).abs() < 1e-15);
        let (psi, _) = logistic_links(&[700.0], &bc, &bz);
        assert!(psi <= 1.0 && psi > 1.0 - 1e-10);
    }

    #[test]
    fn gaussian_posterior_hand_case() {
        // q=1, one pair with y=1, omega=1, kappa=0.5, B0=1, b0=0:
        // B = 0.5, b = 0.25.
        let m = DMatrix::from_vec(1, 1, vec![1.0 + 1.0]);
        let v = DVector::from_vec(vec![0.0 + 0.5]);
        let (mean, cov) = gaussian_posterior(&m, &v).unwrap();
        assert!((cov[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((mean[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn gaussian_posterior_prior_limit() {
        // All weights zero: B = B0 and b = b0 + B0 Y' kappa.
        let b0_scale = 4.0;
        let m = DMatrix::from_vec(1, 1, vec![1.0 / b0_scale]);
        let ytk = 0.7;
        let v = DVector::from_vec(vec![0.0 / b0_scale + ytk]);
        let (mean, cov) = gaussian_posterior(&m, &v).unwrap();
        assert!((cov[(0, 0)] - b0_scale).abs() < 1e-12);
        assert!((mean[0] - b0_scale * ytk).abs() < 1e-12);
    }

    #[test]
    fn gaussian_posterior_stays_positive_definite() {
        let mut rng = RngStream::new(3, 0);
        for _ in 0..50 {
            let q = 3;
            let mut m = DMatrix::identity(q, q) / 10.0;
            for _ in 0..8 {
                let y = DVector::from_fn(q, |_, _| sample_normal(0.0, 1.0, &mut rng));
                let omega = rng.next_f64() * 2.0;
                for a in 0..q {
                    for b in 0..q {
                        m[(a, b)] += omega * y[a] * y[b];
                    }
                }
            }
            let v = DVector::from_fn(q, |_, _| sample_normal(0.0, 1.0, &mut rng));
            let (_, cov) = gaussian_posterior(&m, &v).unwrap();
            assert!(cov.clone().cholesky().is_some(), "posterior covariance must be PD");
        }
    }

    #[test]
    fn polya_gamma_identity_matches_nb_mass() {
        // exp(r eta)/(1+e^eta)^(w+r) = 2^-(w+r) e^(kappa eta)
        //   E_{PG(w+r,0)} exp(-omega eta^2 / 2).
        let mut rng = RngStream::new(99, 0);
        for &(w, r, eta) in &[(0u64, 1.3f64, 0.8f64), (3, 2.0, -1.2), (6, 0.7, 0.4)] {
            let b = w as f64 + r;
            let reps = 100_000;
            let mut acc = 0.0;
            for _ in 0..reps {
                let omega = sample_polya_gamma(b, 0.0, &mut rng).unwrap();
                acc += (-omega * eta * eta / 2.0).exp();
            }
            let e_hat = acc / reps as f64;
            let kappa = (r - w as f64) / 2.0;
            let lhs = r * eta - b * (1.0 + eta.exp()).ln();
            let rhs = -b * 2f64.ln() + kappa * eta + e_hat.ln();
            // Cross-check against the NB pmf route as well.
            let psi = logistic(eta);
            let nb = nb_log_pmf(w, psi, r);
            let norm = ln_gamma_fn(w as f64 + r) - ln_gamma_fn(r) - ln_gamma_fn(w as f64 + 1.0);
            assert!(((lhs - rhs).exp() - 1.0).abs() < 0.01, "identity off: {} vs {}", lhs, rhs);
            assert!(((nb - norm - lhs).abs()) < 1e-10, "pmf decomposition off");
        }
    }

    fn toy_sampler_inputs(
        n: usize,
        q: usize,
        seed: u64,
    ) -> (AdjacencyMatrix, CovariateTensor) {
        let mut rng = RngStream::new(seed, 7);
        let beta: Vec<Vec<f64>> = vec![vec![0.6; q]; 1];
        let (a, cov, _) = generate_czinb_network(n, q, 1, &beta, &beta, 2.0, crate::net::CovariateLaw::StandardNormal, &mut rng).unwrap();
        (a, cov)
    }

    /// Log-domain Simpson over a symmetric grid for the 1-D Gaussian-type
    /// integrals of the oracle.
    fn log_integral(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let n = 2000usize;
        let h = (hi - lo) / n as f64;
        let mut logs = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let weight: f64 = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            logs.push(f(x) + weight.ln());
        }
        crate::dist::log_sum_exp(&logs) + (h / 3.0).ln()
    }

    struct CovInstance {
        n: usize,
        k: usize,
        z: Vec<usize>,
        y: Vec<Vec<f64>>, // per pair index, q = 1
        omega: [Vec<f64>; 2],
        kappa: [Vec<f64>; 2],
        s: Vec<f64>,
        b0: f64,
        b0_scale: f64,
    }

    fn random_cov_instance(rng: &mut RngStream, n: usize, k: usize) -> CovInstance {
        let pairs = n * (n - 1) / 2;
        CovInstance {
            n,
            k,
            z: (0..n).map(|_| (rng.next_f64() * k as f64) as usize).collect(),
            y: (0..pairs).map(|_| vec![sample_normal(0.0, 1.0, rng)]).collect(),
            omega: [
                (0..pairs).map(|_| 0.05 + rng.next_f64() * 1.5).collect(),
                (0..pairs).map(|_| 0.05 + rng.next_f64() * 1.5).collect(),
            ],
            kappa: [
                (0..pairs).map(|_| sample_normal(0.0, 1.5, rng)).collect(),
                (0..pairs).map(|_| if rng.next_f64() < 0.5 { -0.5 } else { 0.5 }).collect(),
            ],
            s: (0..k).map(|_| 0.2 + 1.8 * rng.next_f64()).collect(),
            b0: 0.3,
            b0_scale: 2.5,
        }
    }

    /// Implementation-path label probabilities via the information pairs.
    fn impl_label_probs_cov(inst: &CovInstance, node: usize) -> Vec<f64> {
        let k = inst.k;
        let prior_m = 1.0 / inst.b0_scale;
        let prior_v = inst.b0 / inst.b0_scale;
        // Build per-block info from scratch for the full configuration.
        let mut info_m = [SymMat::from_elem(k, prior_m), SymMat::from_elem(k, prior_m)];
        let mut info_v = [SymMat::from_elem(k, prior_v), SymMat::from_elem(k, prior_v)];
        for i in 0..inst.n {
            for j in (i + 1)..inst.n {
                let pidx = pair_index(inst.n, i, j);
                let y = inst.y[pidx][0];
                for s in 0..2 {
                    *info_m[s].get_mut(inst.z[i], inst.z[j]) +=
                        inst.omega[s][pidx] * y * y;
                    *info_v[s].get_mut(inst.z[i], inst.z[j]) += inst.kappa[s][pidx] * y;
                }
            }
        }
        // Remove the node.
        let mut delta_m = vec![[0.0f64; 2]; k];
        let mut delta_v = vec![[0.0f64; 2]; k];
        for j in 0..inst.n {
            if j == node {
                continue;
            }
            let pidx = pair_index(inst.n, node, j);
            let y = inst.y[pidx][0];
            for s in 0..2 {
                delta_m[inst.z[j]][s] += inst.omega[s][pidx] * y * y;
                delta_v[inst.z[j]][s] += inst.kappa[s][pidx] * y;
            }
        }
        let from = inst.z[node];
        for m in 0..k {
            for s in 0..2 {
                *info_m[s].get_mut(from, m) -= delta_m[m][s];
                *info_v[s].get_mut(from, m) -= delta_v[m][s];
            }
        }
        let mut occ = vec![0u64; k];
        for (idx, &l) in inst.z.iter().enumerate() {
            if idx != node {
                occ[l] += 1;
            }
        }
        let f = |m: f64, v: f64| -0.5 * m.ln() + 0.5 * v * v / m;
        let mut logw = Vec::with_capacity(k);
        for c in 0..k {
            let mut lw = inst.s[c].ln();
            for m in 0..k {
                if occ[m] == 0 {
                    continue;
                }
                for s in 0..2 {
                    let base_m = *info_m[s].get_ref(c, m);
                    let base_v = *info_v[s].get_ref(c, m);
                    lw += f(base_m + delta_m[m][s], base_v + delta_v[m][s]) - f(base_m, base_v);
                }
            }
            logw.push(lw);
        }
        let norm = crate::dist::log_sum_exp(&logw);
        logw.iter().map(|lw| (lw - norm).exp()).collect()
    }

    /// Quadrature oracle: per candidate, integrate each block's augmented
    /// likelihood over its scalar coefficient against the normal prior.
    fn oracle_label_probs_cov(inst: &CovInstance, node: usize) -> Vec<f64> {
        let half_width = 14.0 * inst.b0_scale.sqrt();
        let mut logw = Vec::with_capacity(inst.k);
        for c in 0..inst.k {
            let mut z = inst.z.clone();
            z[node] = c;
            let mut lw = inst.s[c].ln();
            for l in 0..inst.k {
                for m in l..inst.k {
                    for s in 0..2 {
                        // Collect this block's pairs.
                        let mut terms: Vec<(f64, f64, f64)> = Vec::new(); // (y, omega, kappa)
                        for i in 0..inst.n {
                            for j in (i + 1)..inst.n {
                                let (li, lj) = (z[i].min(z[j]), z[i].max(z[j]));
                                if (li, lj) == (l, m) {
                                    let pidx = pair_index(inst.n, i, j);
                                    terms.push((
                                        inst.y[pidx][0],
                                        inst.omega[s][pidx],
                                        inst.kappa[s][pidx],
                                    ));
                                }
                            }
                        }
                        if terms.is_empty() {
                            continue;
                        }
                        let (b0, scale) = (inst.b0, inst.b0_scale);
                        // Fully normalized prior density: candidates differ
                        // in how many blocks they populate, so the
                        // normalization does not cancel.
                        let log_norm = -0.5 * (2.0 * std::f64::consts::PI * scale).ln();
                        let li = log_integral(
                            |beta| {
                                let mut e =
                                    log_norm - 0.5 * (beta - b0) * (beta - b0) / scale;
                                for &(y, omega, kappa) in &terms {
                                    let eta = y * beta;
                                    e += kappa * eta - omega * eta * eta / 2.0;
                                }
                                e
                            },
                            b0 - half_width,
                            b0 + half_width,
                        );
                        lw += li;
                    }
                }
            }
            logw.push(lw);
        }
        let norm = crate::dist::log_sum_exp(&logw);
        logw.iter().map(|lw| (lw - norm).exp()).collect()
    }

    #[test]
    fn covariate_label_weights_match_quadrature_oracle() {
        let mut rng = RngStream::new(4242, 0);
        for trial in 0..55 {
            let n = 3 + (trial % 2);
            let k = 2;
            let inst = random_cov_instance(&mut rng, n, k);
            let node = (rng.next_f64() * n as f64) as usize;
            let got = impl_label_probs_cov(&inst, node);
            let want = oracle_label_probs_cov(&inst, node);
            for c in 0..k {
                assert!(
                    (got[c] - want[c]).abs() <= 1e-6,
                    "trial {trial} candidate {c}: {} vs {}",
                    got[c],
                    want[c]
                );
                if want[c] > 1e-10 {
                    assert!(
                        ((got[c] - want[c]) / want[c]).abs() <= 1e-6,
                        "trial {trial} candidate {c} rel: {} vs {}",
                        got[c],
                        want[c]
                    );
                }
            }
        }
    }

    #[test]
    fn prior_washout_equalizes_candidates() {
        let mut rng = RngStream::new(8, 0);
        let mut inst = random_cov_instance(&mut rng, 3, 2);
        inst.s = vec![1.0, 1.0];
        inst.b0 = 0.0;
        inst.b0_scale = 1e6;
        // Shrink the data so the prior dominates.
        for s in 0..2 {
            for v in inst.omega[s].iter_mut() {
                *v = 1e-9;
            }
            for v in inst.kappa[s].iter_mut() {
                *v *= 1e-9;
            }
        }
        let probs = impl_label_probs_cov(&inst, 0);
        assert!((probs[0] - probs[1]).abs() < 1e-3, "{probs:?}");
    }

    #[test]
    fn coefficient_draws_match_conditional_moments() {
        // Fixed conditional: sample covariance over many draws approaches
        // B = M^{-1} within 2%.
        let (a, cov) = toy_sampler_inputs(10, 2, 31);
        let sampler =
            CzinbSampler::new(&a, &cov, CzinbPriors::default(), DmfmConfig::default()).unwrap();
        let mut rng = RngStream::new(17, 0);
        let mut st = sampler.init_state(&mut rng).unwrap();
        // Collapse to one block so (0,0) has all pairs.
        for i in 0..10 {
            st.partition.move_node(i, 0);
        }
        st.partition.resize_components(1, || 1.0);
        for s in 0..2 {
            st.beta[s] = st.beta[s].resized(1, DVector::zeros(2));
            st.info_m[s] = st.info_m[s].resized(1, sampler.prior_info_m.clone());
            st.info_v[s] = st.info_v[s].resized(1, sampler.prior_info_v.clone());
        }
        sampler.rebuild_info(&mut st);
        let (_, cov_expect) = gaussian_posterior(
            st.info_m[0].get_ref(0, 0),
            st.info_v[0].get_ref(0, 0),
        )
        .unwrap();

        let reps = 100_000;
        let mut mean = DVector::zeros(2);
        let mut sq = DMatrix::zeros(2, 2);
        for _ in 0..reps {
            sampler.step_coefficients(&mut st, &mut rng).unwrap();
            let b = st.beta[0].get_ref(0, 0);
            mean += b;
            for aa in 0..2 {
                for bb in 0..2 {
                    sq[(aa, bb)] += b[aa] * b[bb];
                }
            }
        }
        mean /= reps as f64;
        let mut cov_hat = sq / reps as f64;
        for aa in 0..2 {
            for bb in 0..2 {
                cov_hat[(aa, bb)] -= mean[aa] * mean[bb];
            }
        }
        for aa in 0..2 {
            for bb in 0..2 {
                let denom = cov_expect[(aa, aa)].sqrt() * cov_expect[(bb, bb)].sqrt();
                assert!(
                    ((cov_hat[(aa, bb)] - cov_expect[(aa, bb)]) / denom).abs() < 0.02,
                    "cov[{aa},{bb}]: {} vs {}",
                    cov_hat[(aa, bb)],
                    cov_expect[(aa, bb)]
                );
            }
        }
    }

    #[test]
    fn dispersion_ratio_reduces_when_all_interactions_vanish() {
        let (a, cov) = toy_sampler_inputs(6, 1, 5);
        let sampler =
            CzinbSampler::new(&a, &cov, CzinbPriors::default(), DmfmConfig::default()).unwrap();
        let mut rng = RngStream::new(2, 0);
        let mut st = sampler.init_state(&mut rng).unwrap();
        // Zero every latent interaction: the gamma-function terms cancel and
        // only psi powers, prior, and Jacobian remain.
        for i in 0..6 {
            for j in (i + 1)..6 {
                st.latent.set_pair(i, j, true, 0);
            }
        }
        let r_pro = 1.7;
        let got = sampler.global_dispersion_log_ratio(&st, r_pro);
        let mut sum_log_psi = 0.0;
        for i in 0..6 {
            for j in (i + 1)..6 {
                sum_log_psi += logistic(sampler.eta(&st, i, j, LINK_COUNT)).ln();
            }
        }
        let r_cur = st.r;
        let expect = (r_pro - r_cur) * sum_log_psi
            + (sampler.priors.a_r - 1.0) * (r_pro.ln() - r_cur.ln())
            - sampler.priors.b_r * (r_pro - r_cur)
            + (r_pro.ln() - r_cur.ln());
        assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
    }

    #[test]
    fn identity_dispersion_proposal_accepts() {
        let (a, cov) = toy_sampler_inputs(8, 2, 6);
        let sampler =
            CzinbSampler::new(&a, &cov, CzinbPriors::default(), DmfmConfig::default()).unwrap();
        let mut rng = RngStream::new(4, 0);
        let st = sampler.init_state(&mut rng).unwrap();
        let ratio = sampler.global_dispersion_log_ratio(&st, st.r);
        assert!(ratio.abs() < 1e-12);
    }

    #[test]
    fn kappa_values_follow_definitions() {
        let (a, cov) = toy_sampler_inputs(6, 1, 11);
        let sampler =
            CzinbSampler::new(&a, &cov, CzinbPriors::default(), DmfmConfig::default()).unwrap();
        let mut rng = RngStream::new(12, 0);
        let mut st = sampler.init_state(&mut rng).unwrap();
        st.r = 4.0;
        for i in 0..6 {
            for j in (i + 1)..6 {
                let k2 = sampler.kappa(&st, i, j, LINK_ZERO);
                assert!(k2 == -0.5 || k2 == 0.5);
                if st.latent.w(i, j) as f64 == st.r {
                    assert_eq!(sampler.kappa(&st, i, j, LINK_COUNT), 0.0);
                }
            }
        }
        // Forced-latent check: observed positives pin (x, w).
        for i in 0..6 {
            for j in (i + 1)..6 {
                if a.get(i, j) > 0 {
                    assert_eq!(st.latent.x(i, j), 0);
                    assert_eq!(st.latent.w(i, j), a.get(i, j));
                }
            }
        }
    }

    #[test]
    fn sweeps_keep_information_pairs_in_sync() {
        let (a, cov) = toy_sampler_inputs(16, 2, 21);
        let sampler =
            CzinbSampler::new(&a, &cov, CzinbPriors::default(), DmfmConfig::default()).unwrap();
        let mut rng = RngStream::new(3, 0);
        let mut st = sampler.init_state(&mut rng).unwrap();
        let schedule = FitSchedule {
            iterations: 40,
            burn_in: 20,
            thinning: 1,
            chains: 1,
            seed: 0,
            tempered_burn_in: true,
        };
        for sweep in 0..40 {
            let ctx = schedule.ctx_for(sweep);
            sampler.sweep(&mut st, &ctx, &mut rng).unwrap();
            assert!(st.latent.consistent_with(&a));
            let drift = sampler.debug_info_drift(&st);
            assert!(drift < 1e-9, "sweep {sweep}: info drift {drift}");
            assert!(st.partition.canonical_permutation().is_none());
        }
    }

    #[test]
    fn recovers_two_planted_blocks_with_covariates() {
        let mut rng = RngStream::new(33, 0);
        let q = 2;
        // Intercept-bearing covariates: within-block pairs dense, between
        // sparse, with the free covariate modulating both links inside
        // blocks. The warm-started initialization carries the block
        // discovery; the covariate sampler then has to hold it.
        let beta_count = vec![vec![0.9, 0.4], vec![0.0, 0.3], vec![0.9, -0.4]];
        let beta_zero = vec![vec![-2.5, 1.2], vec![2.5, 0.0], vec![-2.5, -1.2]];
        let (a, cov, truth) = generate_czinb_network(
            50,
            q,
            2,
            &beta_count,
            &beta_zero,
            6.0,
            crate::net::CovariateLaw::InterceptPlusNormal,
            &mut rng,
        )
        .unwrap();
        let sampler =
            CzinbSampler::new(&a, &cov, CzinbPriors::default(), DmfmConfig::default()).unwrap();
        let mut st = sampler.init_state(&mut rng).unwrap();
        let ctx = crate::kernel::SweepCtx::exact();
        let mut k_counts = std::collections::HashMap::new();
        for sweep in 0..400 {
            sampler.sweep(&mut st, &ctx, &mut rng).unwrap();
            if sweep >= 200 {
                *k_counts.entry(st.partition.num_occupied()).or_insert(0usize) += 1;
            }
        }
        let (&mode_k, _) = k_counts.iter().max_by_key(|(_, c)| **c).unwrap();
        assert_eq!(mode_k, truth.num_communities, "k histogram: {k_counts:?}");
    }
}
