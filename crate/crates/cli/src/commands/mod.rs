pub mod fit;
pub mod generate;
pub mod predict;
pub mod reproduce;
pub mod summarize;

use std::path::Path;

use anyhow::{Context, Result};
use blocksampler_core::net::{io, AdjacencyMatrix, CovariateTensor};
use blocksampler_core::predict::ModelKind;

use crate::config::RunConfig;

pub(crate) fn load_adjacency_arg(
    path: &Path,
    format: &str,
    nodes: Option<usize>,
) -> Result<AdjacencyMatrix> {
    let fmt = io::AdjacencyFormat::parse(format)?;
    Ok(io::load_adjacency(path, fmt, nodes)?)
}

/// Load and transform covariates per the data-handling configuration.
pub(crate) fn load_covariates_arg(
    path: &Path,
    n: usize,
    cfg: &RunConfig,
) -> Result<CovariateTensor> {
    let raw = io::load_covariates(path, n)
        .with_context(|| format!("loading covariates from {}", path.display()))?;
    let cov = if cfg.standardize { raw.standardized() } else { raw };
    Ok(if cfg.intercept { cov.with_intercept() } else { cov })
}

pub(crate) fn require_covariates(
    model: ModelKind,
    covariates: &Option<std::path::PathBuf>,
) -> Result<()> {
    if model.needs_covariates() && covariates.is_none() {
        anyhow::bail!("covariates required for the covariate model (--covariates <path>)");
    }
    Ok(())
}

pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}
