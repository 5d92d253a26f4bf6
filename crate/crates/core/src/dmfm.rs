//! Model-agnostic steps of the telescoping sampler: the auxiliary variable
//! tied to the weight normalization, the concentration update, the conditional
//! draw of the number of components, and the unnormalized weight refresh.
//!
//! These four updates are shared verbatim by every kernel; only the label and
//! block-parameter steps differ between models.

use serde::{Deserialize, Serialize};

use crate::dist::{
    bnb_log_pmf, f_log_density, gamma_laplace_log, ln_rising, log_sum_exp, propose_log_normal,
    sample_categorical_from_log, sample_gamma, GammaLaplaceTerms,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Configuration of the prior on the number of components and the shared
/// sampler knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmfmConfig {
    /// Beta-negative-binomial prior `BNB(bnb_alpha, bnb_a, bnb_b)` on `K - 1`.
    pub bnb_alpha: f64,
    pub bnb_a: f64,
    pub bnb_b: f64,
    /// Random-walk scale for the concentration update on the log scale.
    pub gamma_proposal_sd: f64,
    /// Hard cap on the number of components.
    pub k_max: usize,
    /// Stop extending the component-count weight table once the bounded
    /// remaining mass falls below this fraction.
    pub tail_tol: f64,
}

impl Default for DmfmConfig {
    fn default() -> Self {
        DmfmConfig {
            bnb_alpha: 1.0,
            bnb_a: 4.0,
            bnb_b: 3.0,
            gamma_proposal_sd: 0.1,
            k_max: 150,
            tail_tol: 1e-10,
        }
    }
}

impl DmfmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bnb_alpha > 0.0 && self.bnb_a > 0.0 && self.bnb_b > 0.0) {
            return Err(Error::config("BNB hyperparameters must be positive"));
        }
        if !(self.gamma_proposal_sd > 0.0) {
            return Err(Error::config("gamma proposal sd must be positive"));
        }
        if self.k_max < 1 {
            return Err(Error::config("k_max must be at least 1"));
        }
        if !(self.tail_tol > 0.0 && self.tail_tol <= 1e-6) {
            return Err(Error::config("tail_tol must lie in (0, 1e-6]"));
        }
        Ok(())
    }

    /// Log prior mass of `K = m` components (i.e. BNB at `m - 1`).
    pub fn log_prior_k(&self, m: usize) -> f64 {
        debug_assert!(m >= 1);
        bnb_log_pmf((m - 1) as u64, self.bnb_alpha, self.bnb_a, self.bnb_b)
    }
}

/// Step 1: draw the auxiliary `u ~ Gamma(n, T)` with `T` the total weight.
pub fn sample_auxiliary_u(
    num_nodes: usize,
    total_weight: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    if !(total_weight > 0.0) {
        return Err(Error::invariant(format!(
            "total unnormalized weight T = {total_weight} must be positive"
        )));
    }
    Ok(sample_gamma(num_nodes as f64, total_weight, rng))
}

/// Log of the concentration target: `prod_j kappa(u; n_j, K) * psi(u; K)^{K-k}
/// * p(gamma)` with the F(6,3) prior density.
fn log_gamma_target(
    gamma: f64,
    u: f64,
    occupied_counts: &[u64],
    num_components: usize,
) -> f64 {
    let mut total = f_log_density(gamma, 6.0, 3.0);
    let k = occupied_counts.len();
    for &n_j in occupied_counts {
        let terms = GammaLaplaceTerms { u, gamma, num_components: num_components as u32, occupancy: n_j };
        let (_, log_kappa) = gamma_laplace_log(&terms);
        total += log_kappa;
    }
    let terms = GammaLaplaceTerms { u, gamma, num_components: num_components as u32, occupancy: 0 };
    let (log_psi, _) = gamma_laplace_log(&terms);
    total + (num_components - k) as f64 * log_psi
}

/// Step 6: log-normal random-walk Metropolis-Hastings update of the
/// concentration. Returns the new value and whether the proposal was accepted.
pub fn update_concentration(
    gamma: f64,
    u: f64,
    occupied_counts: &[u64],
    num_components: usize,
    proposal_sd: f64,
    rng: &mut RngStream,
) -> (f64, bool) {
    let proposal = propose_log_normal(gamma, proposal_sd, rng);
    let log_ratio = log_gamma_target(proposal, u, occupied_counts, num_components)
        - log_gamma_target(gamma, u, occupied_counts, num_components)
        + proposal.ln()
        - gamma.ln();
    if log_ratio >= 0.0 || rng.next_f64().ln() < log_ratio {
        (proposal, true)
    } else {
        (gamma, false)
    }
}

/// Outcome of the component-count draw, including whether the hard cap
/// truncated visibly probable mass.
#[derive(Debug, Clone, Copy)]
pub struct NumComponentsDraw {
    pub value: usize,
    pub cap_hit: bool,
}

/// Likelihood part of the step-7 weight for `K = m`:
/// `m!/(m-k)! * prod_j kappa(u; n_j, m) * psi(u; m)^{m-k}`, in logs. The
/// product collapses to rising factorials of `gamma/m` times the constant
/// `(1+u)^{-(gamma+n)}`, which is kept so tables normalize honestly.
pub fn log_num_components_likelihood(
    m: usize,
    occupied_counts: &[u64],
    gamma: f64,
    u: f64,
) -> f64 {
    let k = occupied_counts.len();
    debug_assert!(m >= k);
    let shape = gamma / m as f64;
    let log_base = -(1.0 + u).ln();
    let mut lw = ln_rising((m - k + 1) as f64, k as u64); // m!/(m-k)!
    let mut occupied_total = 0u64;
    for &n_j in occupied_counts {
        lw += ln_rising(shape, n_j);
        occupied_total += n_j;
    }
    lw + (gamma + occupied_total as f64) * log_base
}

/// Full log weight of `K = m` under the configured BNB prior.
pub fn log_num_components_weight(
    m: usize,
    occupied_counts: &[u64],
    gamma: f64,
    u: f64,
    cfg: &DmfmConfig,
) -> f64 {
    log_num_components_likelihood(m, occupied_counts, gamma, u) + cfg.log_prior_k(m)
}

/// Build the adaptive step-7 weight table starting at `m = k`.
///
/// The weight tail decays polynomially like the BNB prior's, at order
/// `m^-(bnb_a + 1)`; the loop stops once the integral bound on the remaining
/// mass, `w(m) * m / bnb_a`, drops below `tail_tol` of the accumulated mass
/// (requiring the weights to have started decreasing), or at `k_max`, in
/// which case the cap flag is set.
pub fn component_count_table(
    occupied_counts: &[u64],
    gamma: f64,
    u: f64,
    cfg: &DmfmConfig,
) -> (Vec<f64>, bool) {
    let k = occupied_counts.len().max(1);
    let mut log_weights = Vec::with_capacity(32);
    let mut cap_hit = true;
    let mut log_acc = f64::NEG_INFINITY;
    let mut prev = f64::NEG_INFINITY;
    for m in k..=cfg.k_max.max(k) {
        let lw = log_num_components_weight(m, occupied_counts, gamma, u, cfg);
        log_weights.push(lw);
        log_acc = if log_acc > lw {
            log_acc + (lw - log_acc).exp().ln_1p()
        } else {
            lw + (log_acc - lw).exp().ln_1p()
        };
        let decreasing = lw < prev;
        prev = lw;
        if decreasing && m > k + 4 {
            let log_tail_bound = lw + (m as f64 / cfg.bnb_a).ln();
            if log_tail_bound - log_acc < cfg.tail_tol.ln() {
                cap_hit = false;
                break;
            }
        }
    }
    (log_weights, cap_hit)
}

/// Step 7: exact draw of the number of components from its discrete
/// conditional on `m in {k, k+1, ...}`.
pub fn sample_num_components(
    occupied_counts: &[u64],
    gamma: f64,
    u: f64,
    cfg: &DmfmConfig,
    rng: &mut RngStream,
) -> Result<NumComponentsDraw> {
    let k = occupied_counts.len().max(1);
    let (log_weights, cap_hit) = component_count_table(occupied_counts, gamma, u, cfg);
    let norm = log_sum_exp(&log_weights);
    if !norm.is_finite() {
        return Err(Error::invariant(format!(
            "component-count weights underflowed: k={k}, gamma={gamma}, u={u}, \
             first weights {:?}",
            &log_weights[..log_weights.len().min(5)]
        )));
    }
    let idx = sample_categorical_from_log(&log_weights, rng)?;
    Ok(NumComponentsDraw { value: k + idx, cap_hit })
}

/// Steps 8-9: refresh all unnormalized weights. Component `m` gets shape
/// `gamma/K + n_m` (zero `n_m` for empty components) and rate `u + 1`.
pub fn sample_unnormalized_weights(
    occupancy: &[u64],
    gamma: f64,
    num_components: usize,
    u: f64,
    rng: &mut RngStream,
) -> Vec<f64> {
    debug_assert!(occupancy.len() <= num_components);
    let shape_base = gamma / num_components as f64;
    let rate = u + 1.0;
    (0..num_components)
        .map(|m| {
            let n_m = occupancy.get(m).copied().unwrap_or(0);
            // Tiny shapes can round to an exact zero draw; keep weights
            // strictly positive so log-weights stay well defined.
            sample_gamma(shape_base + n_m as f64, rate, rng).max(1e-300)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auxiliary_u_has_gamma_moments() {
        let mut rng = RngStream::new(31, 0);
        let (n, t) = (12usize, 7.5f64);
        let reps = 100_000;
        let mean =
            (0..reps).map(|_| sample_auxiliary_u(n, t, &mut rng).unwrap()).sum::<f64>()
                / reps as f64;
        let expect = n as f64 / t;
        assert!((mean - expect).abs() < 0.01 * expect, "{mean} vs {expect}");
        assert!(sample_auxiliary_u(3, 0.0, &mut rng).is_err());
    }

    #[test]
    fn concentration_update_accepts_identity_proposal() {
        // With sd -> 0 the proposal equals the current state and the
        // acceptance ratio is exactly 1.
        let mut rng = RngStream::new(5, 0);
        let (g, accepted) = update_concentration(1.3, 0.8, &[4, 2], 3, 1e-14, &mut rng);
        assert!(accepted);
        assert!((g - 1.3).abs() < 1e-9);
    }

    #[test]
    fn concentration_update_mixes() {
        let mut rng = RngStream::new(6, 0);
        let mut gamma = 1.0;
        let mut accepts = 0;
        let total = 4000;
        for _ in 0..total {
            let (g, acc) = update_concentration(gamma, 0.5, &[5, 3, 2], 4, 0.1, &mut rng);
            gamma = g;
            accepts += acc as usize;
        }
        let rate = accepts as f64 / total as f64;
        assert!(rate > 0.0 && rate < 1.0, "degenerate acceptance rate {rate}");
    }

    #[test]
    fn num_components_respects_support_and_cap() {
        let cfg = DmfmConfig::default();
        let mut rng = RngStream::new(8, 0);
        for _ in 0..200 {
            let draw =
                sample_num_components(&[3, 2, 2], 1.0, 0.5, &cfg, &mut rng).unwrap();
            assert!(draw.value >= 3);
            assert!(draw.value <= cfg.k_max);
        }
    }

    #[test]
    fn point_mass_prior_forces_its_atom() {
        // With a point-mass q_K at m0 >= k, every draw must be m0; compose
        // the likelihood part with the degenerate prior by hand.
        let counts = [3u64, 1];
        let (k, m0) = (counts.len(), 7usize);
        let table: Vec<f64> = (k..=12)
            .map(|m| {
                let prior = if m == m0 { 0.0 } else { f64::NEG_INFINITY };
                log_num_components_likelihood(m, &counts, 1.2, 0.4) + prior
            })
            .collect();
        let mut rng = RngStream::new(77, 0);
        for _ in 0..100 {
            let idx = sample_categorical_from_log(&table, &mut rng).unwrap();
            assert_eq!(k + idx, m0);
        }
    }

    #[test]
    fn num_components_matches_brute_force_frequencies() {
        // k=1, n_1=2, gamma=1, u=1, BNB(1,4,3): compare sampled frequencies
        // against the exhaustively normalized weight table (chi-square).
        let cfg = DmfmConfig { k_max: 400, tail_tol: 1e-12, ..DmfmConfig::default() };
        let counts = [2u64];
        let (gamma, u) = (1.0, 1.0);

        let brute: Vec<f64> = (1..=200)
            .map(|m| log_num_components_weight(m, &counts, gamma, u, &cfg))
            .collect();
        let norm = log_sum_exp(&brute);
        let probs: Vec<f64> = brute.iter().map(|lw| (lw - norm).exp()).collect();

        let mut rng = RngStream::new(44, 0);
        let reps = 100_000usize;
        let mut freq = vec![0usize; 201];
        for _ in 0..reps {
            let d = sample_num_components(&counts, gamma, u, &cfg, &mut rng).unwrap();
            if d.value <= 200 {
                freq[d.value] += 1;
            }
        }
        // Chi-square over the cells with decent expected counts.
        let mut chi2 = 0.0;
        let mut dof = 0;
        for m in 1..=200 {
            let expect = probs[m - 1] * reps as f64;
            if expect >= 20.0 {
                let obs = freq[m] as f64;
                chi2 += (obs - expect).powi(2) / expect;
                dof += 1;
            }
        }
        // Generous bound: P(chi2 > dof + 5 sqrt(2 dof)) is tiny.
        let bound = dof as f64 + 5.0 * (2.0 * dof as f64).sqrt();
        assert!(chi2 < bound, "chi2 {chi2} with {dof} cells (bound {bound})");
    }

    #[test]
    fn truncation_stops_close_to_full_table() {
        // Total variation between the adaptive table and a much longer one
        // stays within 2 * tail_tol. The BNB(1,4,3) tail decays like m^-5,
        // so reaching 1e-10 of remaining mass takes a table of O(10^3); the
        // production default cap of 150 simply records a cap hit instead.
        let cfg = DmfmConfig { k_max: 5000, ..DmfmConfig::default() };
        let counts = [5u64, 4, 1];
        let (gamma, u) = (2.0, 0.7);
        let k = counts.len();

        let (short, cap_hit) = component_count_table(&counts, gamma, u, &cfg);
        assert!(!cap_hit, "table should stop before the hard cap");
        let adaptive_len = short.len();
        let long: Vec<f64> = (0..(adaptive_len + 600))
            .map(|i| log_num_components_weight(k + i, &counts, gamma, u, &cfg))
            .collect();
        let (ns, nl) = (log_sum_exp(&short), log_sum_exp(&long));
        let mut tv = 0.0;
        for i in 0..long.len() {
            let p_long = (long[i] - nl).exp();
            let p_short = if i < short.len() { (short[i] - ns).exp() } else { 0.0 };
            tv += (p_long - p_short).abs();
        }
        tv /= 2.0;
        assert!(tv < 2.0 * cfg.tail_tol, "tv {tv}");
    }

    #[test]
    fn weight_refresh_moments_and_counts() {
        let mut rng = RngStream::new(10, 0);
        let occupancy = [6u64, 0, 3];
        let (gamma, u, k_total) = (2.0, 1.5, 5usize);
        let reps = 60_000;
        let mut sums = vec![0.0; k_total];
        for _ in 0..reps {
            let s = sample_unnormalized_weights(&occupancy, gamma, k_total, u, &mut rng);
            assert_eq!(s.len(), k_total);
            assert!(s.iter().all(|&v| v > 0.0));
            for (acc, v) in sums.iter_mut().zip(&s) {
                *acc += v;
            }
        }
        for m in 0..k_total {
            let n_m = occupancy.get(m).copied().unwrap_or(0) as f64;
            let expect = (gamma / k_total as f64 + n_m) / (u + 1.0);
            let mean = sums[m] / reps as f64;
            assert!((mean - expect).abs() < 0.015 * expect.max(0.2), "{mean} vs {expect}");
        }
    }
}
