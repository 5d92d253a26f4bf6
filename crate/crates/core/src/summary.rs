//! Clustering summaries over posterior partition draws: the variation of
//! information metric, the minimum-expected-VI point estimate, the credible
//! ball radius, and block-coefficient summaries for the covariate model.

use std::collections::HashMap;

use crate::chain::{ChainStore, ParamsDraw};
use crate::error::{Error, Result};

/// Variation of information between two partitions (natural log):
/// `H(a) + H(b) - 2 I(a, b)`, computed from the exact contingency table.
pub fn vi_distance(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::data(format!(
            "partition lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ka = a.iter().copied().max().map_or(0, |m| m + 1);
    let kb = b.iter().copied().max().map_or(0, |m| m + 1);
    let mut joint = vec![0u64; ka * kb];
    let mut ma = vec![0u64; ka];
    let mut mb = vec![0u64; kb];
    for (&la, &lb) in a.iter().zip(b.iter()) {
        joint[la * kb + lb] += 1;
        ma[la] += 1;
        mb[lb] += 1;
    }
    let h = |counts: &[u64]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let h_a = h(&ma);
    let h_b = h(&mb);
    let mut mi = 0.0;
    for la in 0..ka {
        for lb in 0..kb {
            let c = joint[la * kb + lb];
            if c > 0 {
                let p = c as f64 / n;
                mi += p * ((c as f64 * n) / (ma[la] as f64 * mb[lb] as f64)).ln();
            }
        }
    }
    Ok((h_a + h_b - 2.0 * mi).max(0.0))
}

/// Canonical form of a partition: labels renumbered by first appearance.
pub fn canonical_labels(z: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    let mut next = 0usize;
    z.iter()
        .map(|&l| {
            *map.entry(l).or_insert_with(|| {
                let v = next;
                next += 1;
                v
            })
        })
        .collect()
}

/// Deduplicated partition draws with multiplicities, in first-seen order.
fn dedup_partitions(draws: &[Vec<usize>]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut unique = Vec::new();
    let mut counts = Vec::new();
    for z in draws {
        let canon = canonical_labels(z);
        if let Some(&idx) = index.get(&canon) {
            counts[idx] += 1;
        } else {
            index.insert(canon.clone(), unique.len());
            unique.push(canon);
            counts.push(1);
        }
    }
    (unique, counts)
}

/// Partition minimizing the average VI distance to all sampled partitions,
/// over the sampled partitions as the candidate set; ties break toward the
/// earliest draw.
pub fn minvi_point_estimate(draws: &[Vec<usize>]) -> Result<Vec<usize>> {
    if draws.is_empty() {
        return Err(Error::data("cannot summarize an empty chain"));
    }
    let (unique, counts) = dedup_partitions(draws);
    let total: usize = counts.iter().sum();
    let mut best_idx = 0;
    let mut best_loss = f64::INFINITY;
    for (ci, cand) in unique.iter().enumerate() {
        let mut loss = 0.0;
        for (ui, other) in unique.iter().enumerate() {
            if counts[ui] == 0 {
                continue;
            }
            loss += counts[ui] as f64 * vi_distance(cand, other)?;
        }
        loss /= total as f64;
        if loss < best_loss - 1e-15 {
            best_loss = loss;
            best_idx = ci;
        }
    }
    Ok(unique[best_idx].clone())
}

/// Smallest radius `eps` such that at least `level` of the sampled
/// partitions lie within VI distance `eps` of `center`.
pub fn credible_ball_radius(draws: &[Vec<usize>], center: &[usize], level: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::data("cannot summarize an empty chain"));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::config(format!("credible level {level} not in (0,1)")));
    }
    let mut dists: Vec<f64> =
        draws.iter().map(|z| vi_distance(center, z)).collect::<Result<_>>()?;
    dists.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let needed = (level * draws.len() as f64).ceil() as usize;
    let needed = needed.clamp(1, draws.len());
    Ok(dists[needed - 1])
}

/// Point estimate plus uncertainty summaries for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary {
    pub labels: Vec<usize>,
    pub num_communities: usize,
    pub ball_radius: f64,
    pub vi_to_truth: Option<f64>,
}

pub fn summarize_clustering(
    chain: &ChainStore,
    truth: Option<&[usize]>,
    level: f64,
) -> Result<ClusterSummary> {
    let draws = chain.partitions();
    let labels = minvi_point_estimate(&draws)?;
    let ball_radius = credible_ball_radius(&draws, &labels, level)?;
    let num_communities = labels.iter().copied().max().map_or(0, |m| m + 1);
    let vi_to_truth = truth.map(|t| vi_distance(&labels, t)).transpose()?;
    Ok(ClusterSummary { labels, num_communities, ball_radius, vi_to_truth })
}

/// Posterior mean and equal-tailed credible interval per coordinate of one
/// block pair's coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSummary {
    pub block: (usize, usize),
    /// Per coordinate: (mean, lower, upper).
    pub coords: Vec<(f64, f64, f64)>,
    /// Number of draws that entered the summary.
    pub draws_used: usize,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let idx = (p * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Map each draw's blocks onto the point-estimate blocks by maximum label
/// overlap (greedy, larger overlaps first).
fn block_alignment(draw_labels: &[usize], reference: &[usize], k_ref: usize) -> Vec<Option<usize>> {
    let k_draw = draw_labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut overlap = vec![vec![0usize; k_ref]; k_draw];
    for (&d, &r) in draw_labels.iter().zip(reference.iter()) {
        overlap[d][r] += 1;
    }
    let mut entries: Vec<(usize, usize, usize)> = Vec::new();
    for d in 0..k_draw {
        for r in 0..k_ref {
            if overlap[d][r] > 0 {
                entries.push((overlap[d][r], d, r));
            }
        }
    }
    entries.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut draw_to_ref = vec![None; k_draw];
    let mut ref_taken = vec![false; k_ref];
    for (_, d, r) in entries {
        if draw_to_ref[d].is_none() && !ref_taken[r] {
            draw_to_ref[d] = Some(r);
            ref_taken[r] = true;
        }
    }
    draw_to_ref
}

/// Summarize the regression coefficients of one link for one block pair of
/// the point-estimate partition. Prefers draws whose partition matches the
/// point estimate exactly on the two blocks' memberships; falls back to
/// maximum-overlap alignment across all draws.
pub fn summarize_coefficients(
    chain: &ChainStore,
    reference: &[usize],
    block: (usize, usize),
    link: usize,
    level: f64,
) -> Result<CoefficientSummary> {
    let (l_ref, m_ref) = (block.0.min(block.1), block.0.max(block.1));
    let k_ref = reference.iter().copied().max().map_or(0, |m| m + 1);
    if l_ref >= k_ref || m_ref >= k_ref {
        return Err(Error::data(format!(
            "block pair ({}, {}) is outside the point estimate's {} communities",
            l_ref + 1,
            m_ref + 1,
            k_ref
        )));
    }
    let ref_canon = canonical_labels(reference);

    // Pass 1: exact-membership draws.
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in &chain.records {
        let beta = match &rec.params {
            ParamsDraw::Czinb { beta_count, beta_zero, .. } => {
                if link == 0 {
                    beta_count
                } else {
                    beta_zero
                }
            }
            _ => return Err(Error::data("coefficient summaries need a covariate-model chain")),
        };
        let draw_labels: Vec<usize> = rec.labels.iter().map(|&l| l as usize).collect();
        if canonical_labels(&draw_labels) == ref_canon {
            let k = rec.num_occupied as usize;
            let idx = l_ref * k - l_ref * (l_ref + 1) / 2 + m_ref;
            rows.push(beta[idx].clone());
        }
    }

    // Pass 2: overlap alignment when no draw matches exactly.
    if rows.is_empty() {
        for rec in &chain.records {
            let beta = match &rec.params {
                ParamsDraw::Czinb { beta_count, beta_zero, .. } => {
                    if link == 0 {
                        beta_count
                    } else {
                        beta_zero
                    }
                }
                _ => unreachable!("checked above"),
            };
            let draw_labels: Vec<usize> = rec.labels.iter().map(|&l| l as usize).collect();
            let align = block_alignment(&draw_labels, &ref_canon, k_ref);
            let mut d_l = None;
            let mut d_m = None;
            for (d, target) in align.iter().enumerate() {
                if *target == Some(l_ref) {
                    d_l = Some(d);
                }
                if *target == Some(m_ref) {
                    d_m = Some(d);
                }
            }
            if let (Some(dl), Some(dm)) = (d_l, d_m) {
                let (a, b) = (dl.min(dm), dl.max(dm));
                let k = rec.num_occupied as usize;
                if b < k {
                    let idx = a * k - a * (a + 1) / 2 + b;
                    rows.push(beta[idx].clone());
                }
            }
        }
    }

    if rows.is_empty() {
        return Err(Error::data(format!(
            "block pair ({}, {}) never occupied in the chain",
            l_ref + 1,
            m_ref + 1
        )));
    }
    let q = rows[0].len();
    let mut coords = Vec::with_capacity(q);
    let alpha = (1.0 - level) / 2.0;
    for c in 0..q {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        coords.push((mean, percentile(&vals, alpha), percentile(&vals, 1.0 - alpha)));
    }
    Ok(CoefficientSummary { block: (l_ref, m_ref), coords, draws_used: rows.len() })
}
