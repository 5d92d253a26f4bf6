//! Joint-distribution ("getting it right") testing harness.
//!
//! Two samplers target the same joint law of (parameters, data): the forward
//! sampler draws parameters from the prior and data from the model; the
//! successive-conditional sampler alternates one full posterior sweep (with
//! the latent edges treated as the conditioning data) with a fresh draw of
//! the data given the current parameters. If every transition is correct,
//! moments of any test function agree between the two chains; z-scores
//! outside a few standard errors expose a wrong conditional.
//!
//! Each kernel's harness truncates the component-count prior at a small cap
//! and applies the same truncation on both sides, keeps states canonically
//! relabeled so label-indexed test functions are comparable, and runs the
//! exact kernel (no proposal adaptation, no tempering).

use crate::dist::{sample_beta, sample_categorical, sample_f, sample_gamma, sample_normal};
use crate::dmfm::DmfmConfig;
use crate::error::Result;
use crate::kernel::czinb::{CzinbSampler, CzinbState};
use crate::kernel::zinb::{ZinbSampler, ZinbState};
use crate::kernel::zip::{ZipSampler, ZipState};
use crate::net::{AdjacencyMatrix, CovariateTensor};
use crate::partition::{BlockStats, PartitionState};
use crate::rng::RngStream;

/// One named test function's two-sample comparison.
#[derive(Debug, Clone)]
pub struct GirScore {
    pub name: String,
    pub forward_mean: f64,
    pub successive_mean: f64,
    pub z: f64,
}

#[derive(Debug, Clone)]
pub struct GirReport {
    pub scores: Vec<GirScore>,
}

impl GirReport {
    pub fn max_abs_z(&self) -> f64 {
        self.scores.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }

    pub fn all_within(&self, bound: f64) -> bool {
        self.scores.iter().all(|s| s.z.abs() < bound)
    }
}

/// Mean and squared standard error of an i.i.d. sample.
fn iid_mean_se2(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var / n)
}

/// Mean and squared standard error of a correlated chain via batch means.
fn batch_mean_se2(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let batches = (n as f64).sqrt().floor() as usize;
    let bsize = n / batches;
    let used = batches * bsize;
    let mean = xs[..used].iter().sum::<f64>() / used as f64;
    let mut bvar = 0.0;
    for b in 0..batches {
        let bm = xs[b * bsize..(b + 1) * bsize].iter().sum::<f64>() / bsize as f64;
        bvar += (bm - mean) * (bm - mean);
    }
    bvar /= (batches - 1) as f64;
    (mean, bvar / batches as f64)
}

fn compare(names: &[&str], forward: &[Vec<f64>], successive: &[Vec<f64>]) -> GirReport {
    let scores = names
        .iter()
        .enumerate()
        .map(|(idx, name)| {
            let f: Vec<f64> = forward.iter().map(|row| row[idx]).collect();
            let s: Vec<f64> = successive.iter().map(|row| row[idx]).collect();
            let (mf, sef2) = iid_mean_se2(&f);
            let (ms, ses2) = batch_mean_se2(&s);
            let z = (mf - ms) / (sef2 + ses2).sqrt().max(1e-300);
            GirScore { name: name.to_string(), forward_mean: mf, successive_mean: ms, z }
        })
        .collect();
    GirReport { scores }
}

/// Draw `K - 1` from the BNB prior truncated at `k_max - 1` by rejection
/// (matching the sampler's renormalized truncation exactly).
fn sample_truncated_components(cfg: &DmfmConfig, rng: &mut RngStream) -> usize {
    loop {
        // Beta-negative-binomial as Beta-mixed NB, drawn by composition.
        let p = sample_beta(cfg.bnb_a, cfg.bnb_b, rng);
        let rate = sample_gamma(cfg.bnb_alpha, p / (1.0 - p), rng);
        let m = crate::dist::sample_poisson(rate, rng) as usize;
        if m + 1 <= cfg.k_max {
            return m + 1;
        }
    }
}

/// Shared prior draw of the partition side: (gamma, K, S, z), canonically
/// relabeled; returns the permutation-applied state.
fn sample_partition_prior(n: usize, cfg: &DmfmConfig, rng: &mut RngStream) -> PartitionState {
    let gamma = sample_f(6.0, 3.0, rng);
    let k_total = sample_truncated_components(cfg, rng);
    let weights: Vec<f64> = (0..k_total)
        .map(|_| sample_gamma(gamma / k_total as f64, 1.0, rng).max(1e-300))
        .collect();
    let z: Vec<usize> = (0..n).map(|_| sample_categorical(&weights, rng)).collect();
    let mut state = PartitionState::new(z, k_total, weights, 1.0, gamma).expect("valid prior");
    if let Some(perm) = state.canonical_permutation() {
        state.apply_permutation(&perm);
    }
    state
}

pub struct GirConfig {
    pub nodes: usize,
    pub iterations: usize,
    pub seed: u64,
    pub k_cap: usize,
}

impl Default for GirConfig {
    fn default() -> Self {
        GirConfig { nodes: 8, iterations: 100_000, seed: 2718, k_cap: 6 }
    }
}

fn small_dmfm(k_cap: usize) -> DmfmConfig {
    // A wide concentration proposal: the default walk scale of 0.1 takes
    // thousands of sweeps to traverse the F(6,3) range, which starves the
    // batch-means variance estimate.
    DmfmConfig { k_max: k_cap, gamma_proposal_sd: 1.2, ..DmfmConfig::default() }
}

// ---------------------------------------------------------------------------
// ZINB kernel
// ---------------------------------------------------------------------------

// Heavy-tailed quantities enter through integrable transforms: the
// concentration's F(6,3) prior has no second moment and the latent
// interaction totals have a diverging prior mean (E[1/psi] under a uniform
// prior), so raw means of those are not valid two-sample statistics.
const ZINB_FUNCTIONS: [&str; 10] = [
    "log_gamma", "gamma_ratio", "K", "k", "n_1", "p_11", "psi_11", "r_11", "x_total",
    "w_log_total",
];

fn log1p_w_total(latent: &crate::kernel::LatentEdges) -> f64 {
    let n = latent.num_nodes();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += (1.0 + latent.w(i, j) as f64).ln();
        }
    }
    total
}

fn zinb_measure(st: &ZinbState) -> Vec<f64> {
    let gamma = st.partition.concentration;
    vec![
        gamma.ln(),
        gamma / (1.0 + gamma),
        st.partition.num_components as f64,
        st.partition.num_occupied() as f64,
        st.partition.occupancy()[0] as f64,
        st.params.p.get(0, 0),
        st.params.psi.get(0, 0),
        st.params.r.get(0, 0),
        st.latent.x_total() as f64,
        log1p_w_total(&st.latent),
    ]
}

/// Overwrite a state with a forward draw (parameters from priors, latents
/// from the model).
fn zinb_forward(
    sampler: &ZinbSampler<'_>,
    st: &mut ZinbState,
    n: usize,
    rng: &mut RngStream,
) {
    let partition = sample_partition_prior(n, &sampler.dmfm, rng);
    let k_total = partition.num_components;
    st.partition = partition;
    st.params = crate::kernel::zinb::ZinbBlockParams::from_priors(k_total, &sampler.priors, rng);
    sampler.regenerate_latents_from_model(st, rng);
}

pub fn run_zinb(cfg: &GirConfig) -> Result<GirReport> {
    let n = cfg.nodes;
    let data = AdjacencyMatrix::zeros(n); // placeholder; latents are the data
    let sampler = ZinbSampler::new(
        &data,
        crate::kernel::zinb::ZinbPriors::default(),
        small_dmfm(cfg.k_cap),
    )?;

    let mut rng = RngStream::new(cfg.seed, 0);
    let mut st = sampler.init_state(&mut rng)?;
    let forward: Vec<Vec<f64>> = (0..cfg.iterations)
        .map(|_| {
            zinb_forward(&sampler, &mut st, n, &mut rng);
            zinb_measure(&st)
        })
        .collect();

    let mut rng = RngStream::new(cfg.seed, 1);
    zinb_forward(&sampler, &mut st, n, &mut rng);
    let mut successive = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        sampler.sweep_given_latents(&mut st, &mut rng)?;
        sampler.regenerate_latents_from_model(&mut st, &mut rng);
        successive.push(zinb_measure(&st));
    }
    Ok(compare(&ZINB_FUNCTIONS, &forward, &successive))
}

// ---------------------------------------------------------------------------
// ZIP kernel
// ---------------------------------------------------------------------------

const ZIP_FUNCTIONS: [&str; 10] = [
    "log_gamma", "gamma_ratio", "K", "k", "n_1", "p_11", "lambda_11", "x_total", "a_total",
    "s_share_1",
];

fn zip_measure(st: &ZipState) -> Vec<f64> {
    let a_total: u64 = {
        let n = st.observed.num_nodes();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| st.observed.get(i, j))
            .sum()
    };
    let gamma = st.partition.concentration;
    vec![
        gamma.ln(),
        gamma / (1.0 + gamma),
        st.partition.num_components as f64,
        st.partition.num_occupied() as f64,
        st.partition.occupancy()[0] as f64,
        st.params.p.get(0, 0),
        st.params.lambda.get(0, 0),
        st.latent.x_total() as f64,
        a_total as f64,
        st.partition.weights[0] / st.partition.total_weight(),
    ]
}

fn zip_forward(sampler: &ZipSampler<'_>, st: &mut ZipState, n: usize, rng: &mut RngStream) {
    let partition = sample_partition_prior(n, &sampler.dmfm, rng);
    let k_total = partition.num_components;
    st.partition = partition;
    st.params = crate::kernel::zip::ZipBlockParams::from_priors(k_total, &sampler.priors, rng);
    sampler.regenerate_latents_from_model(st, rng);
}

pub fn run_zip(cfg: &GirConfig) -> Result<GirReport> {
    let n = cfg.nodes;
    let data = AdjacencyMatrix::zeros(n);
    let sampler = ZipSampler::new(
        &data,
        crate::kernel::zip::ZipPriors::default(),
        small_dmfm(cfg.k_cap),
    )?;

    let mut rng = RngStream::new(cfg.seed, 0);
    let mut st = sampler.init_state(&mut rng)?;
    let forward: Vec<Vec<f64>> = (0..cfg.iterations)
        .map(|_| {
            zip_forward(&sampler, &mut st, n, &mut rng);
            zip_measure(&st)
        })
        .collect();

    let mut rng = RngStream::new(cfg.seed, 1);
    zip_forward(&sampler, &mut st, n, &mut rng);
    let mut successive = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        sampler.sweep_given_latents(&mut st, &mut rng)?;
        sampler.regenerate_latents_from_model(&mut st, &mut rng);
        successive.push(zip_measure(&st));
    }
    Ok(compare(&ZIP_FUNCTIONS, &forward, &successive))
}

// ---------------------------------------------------------------------------
// CZINB kernel
// ---------------------------------------------------------------------------

const CZINB_FUNCTIONS: [&str; 11] = [
    "log_gamma",
    "gamma_ratio",
    "K",
    "k",
    "n_1",
    "beta_count_11_0",
    "beta_zero_11_0",
    "r",
    "log_r",
    "x_total",
    "w_log_total",
];

fn czinb_measure(st: &CzinbState) -> Vec<f64> {
    let gamma = st.partition.concentration;
    vec![
        gamma.ln(),
        gamma / (1.0 + gamma),
        st.partition.num_components as f64,
        st.partition.num_occupied() as f64,
        st.partition.occupancy()[0] as f64,
        st.beta[crate::kernel::czinb::LINK_COUNT].get_ref(0, 0)[0],
        st.beta[crate::kernel::czinb::LINK_ZERO].get_ref(0, 0)[0],
        st.r,
        st.r.ln(),
        st.latent.x_total() as f64,
        log1p_w_total(&st.latent),
    ]
}

fn czinb_forward(
    sampler: &CzinbSampler<'_>,
    st: &mut CzinbState,
    n: usize,
    rng: &mut RngStream,
) {
    let partition = sample_partition_prior(n, &sampler.dmfm, rng);
    let k_total = partition.num_components;
    st.partition = partition;
    let q = sampler.dim();
    let sd = sampler.priors.b0_scale.sqrt();
    for s in 0..2 {
        st.beta[s] = crate::partition::SymMat::from_fn(k_total, |_, _| {
            nalgebra::DVector::from_fn(q, |a, _| {
                let _ = a;
                sampler.priors.b0 + sd * sample_normal(0.0, 1.0, rng)
            })
        });
    }
    st.r = sample_gamma(sampler.priors.a_r, sampler.priors.b_r, rng);
    sampler.regenerate_latents_from_model(st, rng);
}

pub fn run_czinb(cfg: &GirConfig, covariate_dim: usize) -> Result<GirReport> {
    let n = cfg.nodes;
    let data = AdjacencyMatrix::zeros(n);
    let mut cov_rng = RngStream::new(cfg.seed ^ 0x9e3779b9, 17);
    let pairs = n * (n - 1) / 2;
    let values: Vec<f64> =
        (0..pairs * covariate_dim).map(|_| sample_normal(0.0, 1.0, &mut cov_rng)).collect();
    let covariates = CovariateTensor::from_values(n, covariate_dim, values)?;
    let sampler = CzinbSampler::new(
        &data,
        &covariates,
        crate::kernel::czinb::CzinbPriors::default(),
        small_dmfm(cfg.k_cap),
    )?;

    let mut rng = RngStream::new(cfg.seed, 0);
    let mut st = sampler.blank_state(&mut rng)?;
    let forward: Vec<Vec<f64>> = (0..cfg.iterations)
        .map(|_| {
            czinb_forward(&sampler, &mut st, n, &mut rng);
            czinb_measure(&st)
        })
        .collect();

    let mut rng = RngStream::new(cfg.seed, 1);
    czinb_forward(&sampler, &mut st, n, &mut rng);
    let mut successive = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        sampler.sweep_given_latents(&mut st, &mut rng)?;
        sampler.regenerate_latents_from_model(&mut st, &mut rng);
        successive.push(czinb_measure(&st));
    }
    Ok(compare(&CZINB_FUNCTIONS, &forward, &successive))
}

/// Consistency check of the stats after regeneration, used by the harness
/// tests to guard against silent drift while the chains run.
pub fn zinb_stats_consistent(st: &ZinbState) -> bool {
    BlockStats::compute(
        &st.partition.z,
        st.partition.num_components,
        &|i, j| st.latent.x(i, j),
        &|i, j| st.latent.w(i, j),
    )
    .map(|fresh| fresh == st.stats)
    .unwrap_or(false)
}
