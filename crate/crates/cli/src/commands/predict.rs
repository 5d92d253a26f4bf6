use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use blocksampler_core::chain::ChainStore;
use blocksampler_core::net::io;
use blocksampler_core::predict::{auc, evaluation_pairs, predictive_scores, rmse};
use clap::Args as ClapArgs;

use crate::config::RunConfig;

#[derive(ClapArgs)]
pub struct Args {
    /// Chain file from `fit`.
    #[arg(long)]
    chain: PathBuf,

    /// Original (pre-masking) network, for mask evaluation.
    #[arg(long)]
    adjacency: Option<PathBuf>,

    #[arg(long, default_value = "edge-list")]
    format: String,

    #[arg(long)]
    nodes: Option<usize>,

    /// Mask file (`i,j,original`): scores the masked pairs and the observed
    /// zeros, and reports AUC and RMSE.
    #[arg(long)]
    mask: Option<PathBuf>,

    /// Pair list CSV with header `i,j`: scores exactly these pairs.
    #[arg(long)]
    pairs: Option<PathBuf>,

    /// Covariates (required for covariate-model chains).
    #[arg(long)]
    covariates: Option<PathBuf>,

    /// Append an intercept column to the covariates.
    #[arg(long)]
    intercept: bool,

    /// Disable covariate standardization.
    #[arg(long)]
    no_standardize: bool,

    /// Output CSV of per-pair scores.
    #[arg(long)]
    out: PathBuf,
}

fn load_pair_list(path: &PathBuf) -> Result<Vec<(usize, usize)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("empty pair list")?;
    if header.split(',').map(str::trim).collect::<Vec<_>>() != ["i", "j"] {
        bail!("pair list header must be `i,j`");
    }
    let mut pairs = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split(',').map(str::trim).collect();
        if toks.len() != 2 {
            bail!("bad pair row `{line}`");
        }
        let i: usize = toks[0].parse().context("bad node id")?;
        let j: usize = toks[1].parse().context("bad node id")?;
        if i == 0 || j == 0 || i == j {
            bail!("pair ids are 1-based and distinct");
        }
        pairs.push((i - 1, j - 1));
    }
    Ok(pairs)
}

pub fn run(args: Args) -> Result<()> {
    let chain = ChainStore::load(&args.chain)?;
    let n = chain
        .records
        .first()
        .map(|r| r.labels.len())
        .context("chain holds no draws")?;

    let covariates = match &args.covariates {
        Some(path) => {
            let mut cfg = RunConfig::default();
            cfg.intercept = args.intercept;
            cfg.standardize = !args.no_standardize;
            Some(super::load_covariates_arg(path, n, &cfg)?)
        }
        None => None,
    };
    if chain.meta.model == "czinb" && covariates.is_none() {
        bail!("covariates required to score a covariate-model chain");
    }

    let mut out = std::fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    if let Some(mask_path) = &args.mask {
        let adjacency_path = args
            .adjacency
            .as_ref()
            .context("--adjacency (the original network) is required with --mask")?;
        let a = super::load_adjacency_arg(adjacency_path, &args.format, args.nodes.or(Some(n)))?;
        let mask = io::load_mask(mask_path)?;
        let (pairs, labels) = evaluation_pairs(&a, &mask);
        let scores = predictive_scores(&chain, &pairs, covariates.as_ref())?;
        writeln!(out, "i,j,prob_nonzero,expected_weight,held_out_positive")?;
        for ((&(i, j), s), &is_pos) in pairs.iter().zip(&scores).zip(&labels) {
            writeln!(
                out,
                "{},{},{},{},{}",
                i + 1,
                j + 1,
                s.prob_nonzero,
                s.expected_weight,
                is_pos as u8
            )?;
        }
        let prob: Vec<f64> = scores.iter().map(|s| s.prob_nonzero).collect();
        let auc_value = auc(&prob, &labels)?;
        let masked_pairs: Vec<(usize, usize)> =
            mask.entries().iter().map(|&(i, j, _)| (i, j)).collect();
        let truth: Vec<f64> = mask.entries().iter().map(|&(_, _, w)| w as f64).collect();
        let masked_scores = predictive_scores(&chain, &masked_pairs, covariates.as_ref())?;
        let expected: Vec<f64> = masked_scores.iter().map(|s| s.expected_weight).collect();
        let rmse_value = rmse(&expected, &truth)?;
        println!("AUC = {auc_value:.4}, RMSE = {rmse_value:.4} over {} masked pairs", mask.len());
    } else if let Some(pairs_path) = &args.pairs {
        let pairs = load_pair_list(pairs_path)?;
        let scores = predictive_scores(&chain, &pairs, covariates.as_ref())?;
        writeln!(out, "i,j,prob_nonzero,expected_weight")?;
        for (&(i, j), s) in pairs.iter().zip(&scores) {
            writeln!(out, "{},{},{},{}", i + 1, j + 1, s.prob_nonzero, s.expected_weight)?;
        }
    } else {
        bail!("either --mask or --pairs is required");
    }
    println!("scores: {}", args.out.display());
    Ok(())
}
