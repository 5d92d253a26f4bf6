//! Posterior-predictive scoring of node pairs and the masked-link
//! prediction experiment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainStore, ParamsDraw};
use crate::dmfm::DmfmConfig;
use crate::error::{Error, Result};
use crate::kernel::czinb::{CzinbPriors, CzinbSampler};
use crate::kernel::zinb::{ZinbPriors, ZinbSampler};
use crate::kernel::zip::{ZipPriors, ZipSampler};
use crate::kernel::{run_chains, FitSchedule};
use crate::net::{mask_nonzero, AdjacencyMatrix, CovariateTensor, MaskSet};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Zinb,
    Czinb,
    Zip,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zinb" => Ok(ModelKind::Zinb),
            "czinb" => Ok(ModelKind::Czinb),
            "zip" => Ok(ModelKind::Zip),
            other => Err(Error::config(format!("unknown model `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Zinb => "zinb",
            ModelKind::Czinb => "czinb",
            ModelKind::Zip => "zip",
        }
    }

    pub fn needs_covariates(&self) -> bool {
        matches!(self, ModelKind::Czinb)
    }
}

/// Posterior-predictive presence probability and expected weight of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub prob_nonzero: f64,
    pub expected_weight: f64,
}

#[inline]
fn upper_tri_index(k: usize, l: usize, m: usize) -> usize {
    let (a, b) = if l <= m { (l, m) } else { (m, l) };
    a * k - a * (a + 1) / 2 + b
}

/// Per-draw presence probability and expectation for a generic ZINB-type
/// pair: `(1-p)(1-psi^r)` and `(1-p) r (1-psi)/psi`.
fn zinb_pair_score(p: f64, psi: f64, r: f64) -> PairScore {
    let psi = psi.clamp(1e-12, 1.0 - 1e-12);
    PairScore {
        prob_nonzero: (1.0 - p) * (1.0 - psi.powf(r)),
        expected_weight: (1.0 - p) * r * (1.0 - psi) / psi,
    }
}

fn zip_pair_score(p: f64, lambda: f64) -> PairScore {
    PairScore {
        prob_nonzero: (1.0 - p) * (1.0 - (-lambda).exp()),
        expected_weight: (1.0 - p) * lambda,
    }
}

/// Average the per-draw predictive scores over a chain for the given pairs.
/// Covariates are required for (and only for) covariate-model chains.
pub fn predictive_scores(
    chain: &ChainStore,
    pairs: &[(usize, usize)],
    covariates: Option<&CovariateTensor>,
) -> Result<Vec<PairScore>> {
    if chain.is_empty() {
        return Err(Error::data("empty chain"));
    }
    let mut acc = vec![PairScore { prob_nonzero: 0.0, expected_weight: 0.0 }; pairs.len()];
    for rec in &chain.records {
        let labels = &rec.labels;
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            if i >= labels.len() || j >= labels.len() || i == j {
                return Err(Error::data(format!("pair ({i}, {j}) out of range")));
            }
            let (l, m) = (labels[i] as usize, labels[j] as usize);
            let k = rec.num_occupied as usize;
            let score = match &rec.params {
                ParamsDraw::Zinb { p, psi, r } => {
                    let t = upper_tri_index(k, l, m);
                    zinb_pair_score(p[t], psi[t], r[t])
                }
                ParamsDraw::Zip { p, lambda } => {
                    let t = upper_tri_index(k, l, m);
                    zip_pair_score(p[t], lambda[t])
                }
                ParamsDraw::Czinb { beta_count, beta_zero, r } => {
                    let cov = covariates.ok_or_else(|| {
                        Error::config("covariates required to score a covariate-model chain")
                    })?;
                    let y = cov.pair(i, j);
                    let t = upper_tri_index(k, l, m);
                    let eta1: f64 =
                        y.iter().zip(&beta_count[t]).map(|(a, b)| a * b).sum();
                    let eta2: f64 =
                        y.iter().zip(&beta_zero[t]).map(|(a, b)| a * b).sum();
                    zinb_pair_score(
                        crate::dist::logistic(eta2),
                        crate::dist::logistic(eta1),
                        *r,
                    )
                }
            };
            acc[idx].prob_nonzero += score.prob_nonzero;
            acc[idx].expected_weight += score.expected_weight;
        }
    }
    let t = chain.len() as f64;
    for s in acc.iter_mut() {
        s.prob_nonzero /= t;
        s.expected_weight /= t;
    }
    Ok(acc)
}

/// Area under the ROC curve by the Mann-Whitney statistic with midranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::data("scores and labels differ in length"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::data("AUC needs both classes present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // Midranks over ties.
    let mut rank_sum_pos = 0.0;
    let mut idx = 0;
    while idx < order.len() {
        let mut run_end = idx;
        while run_end + 1 < order.len()
            && scores[order[run_end + 1]] == scores[order[idx]]
        {
            run_end += 1;
        }
        let midrank = (idx + run_end) as f64 / 2.0 + 1.0;
        for &o in &order[idx..=run_end] {
            if labels[o] {
                rank_sum_pos += midrank;
            }
        }
        idx = run_end + 1;
    }
    let pos_f = pos as f64;
    Ok((rank_sum_pos - pos_f * (pos_f + 1.0) / 2.0) / (pos_f * neg as f64))
}

pub fn rmse(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(Error::data("RMSE needs equal-length nonempty inputs"));
    }
    let mse = predicted
        .iter()
        .zip(truth.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / predicted.len() as f64;
    Ok(mse.sqrt())
}

/// The held-out-positive versus observed-zero evaluation set: masked pairs
/// are the positives, unmasked pairs with an original zero the negatives.
pub fn evaluation_pairs(
    original: &AdjacencyMatrix,
    mask: &MaskSet,
) -> (Vec<(usize, usize)>, Vec<bool>) {
    let n = original.num_nodes();
    let masked: std::collections::HashSet<(usize, usize)> =
        mask.entries().iter().map(|&(i, j, _)| (i, j)).collect();
    let mut pairs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if masked.contains(&(i, j)) {
                pairs.push((i, j));
                labels.push(true);
            } else if original.get(i, j) == 0 {
                pairs.push((i, j));
                labels.push(false);
            }
        }
    }
    (pairs, labels)
}

/// Sampler settings shared by every replication of the experiment.
#[derive(Debug, Clone)]
pub struct LinkpredConfig {
    pub model: ModelKind,
    pub replications: usize,
    pub mask_fraction: f64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub master_seed: u64,
}

impl Default for LinkpredConfig {
    fn default() -> Self {
        LinkpredConfig {
            model: ModelKind::Czinb,
            replications: 10,
            mask_fraction: 0.2,
            iterations: 2000,
            burn_in: 1000,
            thinning: 1,
            master_seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub auc: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkpredReport {
    pub model: String,
    pub replications: Vec<Replication>,
    pub failed: Vec<usize>,
    pub auc_mean: f64,
    pub auc_sd: f64,
    pub rmse_mean: f64,
    pub rmse_sd: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Fit the configured model on a training matrix and return the chain.
pub fn fit_model(
    model: ModelKind,
    train: &AdjacencyMatrix,
    covariates: Option<&CovariateTensor>,
    schedule: &FitSchedule,
) -> Result<ChainStore> {
    match model {
        ModelKind::Zinb => {
            let sampler = ZinbSampler::new(train, ZinbPriors::default(), DmfmConfig::default())?;
            run_chains(&sampler, schedule)
        }
        ModelKind::Zip => {
            let sampler = ZipSampler::new(train, ZipPriors::default(), DmfmConfig::default())?;
            run_chains(&sampler, schedule)
        }
        ModelKind::Czinb => {
            let cov = covariates
                .ok_or_else(|| Error::config("covariates required for the covariate model"))?;
            let sampler =
                CzinbSampler::new(train, cov, CzinbPriors::default(), DmfmConfig::default())?;
            run_chains(&sampler, schedule)
        }
    }
}

/// Mask, fit, and score one replication.
fn run_replication(
    rep: usize,
    a: &AdjacencyMatrix,
    covariates: Option<&CovariateTensor>,
    cfg: &LinkpredConfig,
) -> Result<Replication> {
    let mut mask_rng = RngStream::new(cfg.master_seed, 10_000 + rep as u64);
    let (train, mask) = mask_nonzero(a, cfg.mask_fraction, &mut mask_rng)?;
    if mask.is_empty() {
        return Err(Error::data("empty mask: no nonzero pairs were hidden"));
    }
    let schedule = FitSchedule {
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        thinning: cfg.thinning,
        chains: 1,
        seed: cfg.master_seed.wrapping_add(1 + rep as u64),
        // The covariate model's warm-started initialization must not be
        // scattered by the tempering ramp.
        tempered_burn_in: !matches!(cfg.model, ModelKind::Czinb),
    };
    let chain = fit_model(cfg.model, &train, covariates, &schedule)?;

    let (pairs, labels) = evaluation_pairs(a, &mask);
    let scores = predictive_scores(&chain, &pairs, covariates)?;
    let prob: Vec<f64> = scores.iter().map(|s| s.prob_nonzero).collect();
    let auc_value = auc(&prob, &labels)?;

    let masked_pairs: Vec<(usize, usize)> =
        mask.entries().iter().map(|&(i, j, _)| (i, j)).collect();
    let masked_truth: Vec<f64> =
        mask.entries().iter().map(|&(_, _, w)| w as f64).collect();
    let masked_scores = predictive_scores(&chain, &masked_pairs, covariates)?;
    let expected: Vec<f64> = masked_scores.iter().map(|s| s.expected_weight).collect();
    let rmse_value = rmse(&expected, &masked_truth)?;

    Ok(Replication { index: rep, auc: auc_value, rmse: rmse_value })
}

/// The masked-link experiment: repeatedly hide a fraction of the nonzero
/// pairs, refit, and score the hidden pairs. Failed replications are
/// excluded from the aggregates and reported.
pub fn run_linkpred_experiment(
    a: &AdjacencyMatrix,
    covariates: Option<&CovariateTensor>,
    cfg: &LinkpredConfig,
) -> Result<LinkpredReport> {
    if cfg.model.needs_covariates() && covariates.is_none() {
        return Err(Error::config("covariates required for the covariate model"));
    }
    let results: Vec<(usize, Result<Replication>)> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| (rep, run_replication(rep, a, covariates, cfg)))
        .collect();
    let mut replications = Vec::new();
    let mut failed = Vec::new();
    for (rep, res) in results {
        match res {
            Ok(r) => replications.push(r),
            Err(err) => {
                if replications.is_empty() && failed.is_empty() && cfg.replications == 1 {
                    return Err(err);
                }
                // Masking errors affect every replication identically.
                if matches!(err, Error::Data(ref m) if m.contains("empty mask")) {
                    return Err(err);
                }
                failed.push(rep);
            }
        }
    }
    if replications.is_empty() {
        return Err(Error::data("every replication failed"));
    }
    let (auc_mean, auc_sd) = mean_sd(&replications.iter().map(|r| r.auc).collect::<Vec<_>>());
    let (rmse_mean, rmse_sd) =
        mean_sd(&replications.iter().map(|r| r.rmse).collect::<Vec<_>>());
    Ok(LinkpredReport {
        model: cfg.model.name().to_string(),
        replications,
        failed,
        auc_mean,
        auc_sd,
        rmse_mean,
        rmse_sd,
    })
}
