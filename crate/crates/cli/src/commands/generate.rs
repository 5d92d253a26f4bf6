use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use blocksampler_core::net::{self, io, CovariateLaw, Scenario};
use blocksampler_core::RngStream;
use clap::Args as ClapArgs;

#[derive(ClapArgs)]
pub struct Args {
    /// Benchmark scenario: 1 (block ZINB) or 2 (block ZIP).
    #[arg(long, conflicts_with = "czinb")]
    scenario: Option<u32>,

    /// Generate a covariate-driven ZINB network instead of a scenario.
    #[arg(long)]
    czinb: bool,

    /// Number of nodes.
    #[arg(long, default_value_t = 100)]
    n: usize,

    /// Covariate dimension for --czinb (first coordinate is an intercept).
    #[arg(long, default_value_t = 3)]
    q: usize,

    #[arg(long, env = "BLOCKSAMPLER_SEED", default_value_t = 1)]
    seed: u64,

    /// Output path prefix; writes <prefix>_adjacency.csv, <prefix>_truth.csv
    /// and, for --czinb, <prefix>_covariates.csv.
    #[arg(long)]
    out_prefix: PathBuf,
}

/// The planted covariate-model benchmark: two communities, strong baseline
/// density contrast, covariate-modulated zero inflation.
pub(crate) fn planted_czinb_coefficients(q: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, f64) {
    let pad = |base: Vec<f64>| {
        let mut v = base;
        v.resize(q, 0.0);
        v
    };
    let beta_count = vec![
        pad(vec![1.0, 0.3, 0.2]),
        pad(vec![0.5, 0.2, -0.2]),
        pad(vec![1.0, -0.3, 0.2]),
    ];
    let beta_zero = vec![
        pad(vec![-4.0, 3.8, 2.0]),
        pad(vec![4.2, 3.0, 1.6]),
        pad(vec![-4.0, -3.8, 2.0]),
    ];
    (beta_count, beta_zero, 6.0)
}

pub fn run(args: Args) -> Result<()> {
    let mut rng = RngStream::new(args.seed, 0);
    let prefix = args.out_prefix.to_string_lossy();
    let adjacency_path = PathBuf::from(format!("{prefix}_adjacency.csv"));
    let truth_path = PathBuf::from(format!("{prefix}_truth.csv"));

    if args.czinb {
        if args.q < 1 {
            bail!("--q must be at least 1");
        }
        let (beta_count, beta_zero, r) = planted_czinb_coefficients(args.q);
        let (a, cov, truth) = net::generate_czinb_network(
            args.n,
            args.q,
            2,
            &beta_count,
            &beta_zero,
            r,
            CovariateLaw::InterceptPlusNormal,
            &mut rng,
        )?;
        io::save_adjacency_edges(&adjacency_path, &a)?;
        io::save_labels(&truth_path, &truth.labels)?;
        let cov_path = PathBuf::from(format!("{prefix}_covariates.csv"));
        io::save_covariates(&cov_path, &cov)?;
        println!(
            "wrote {}, {}, {}",
            adjacency_path.display(),
            truth_path.display(),
            cov_path.display()
        );
        return Ok(());
    }

    let scenario = args
        .scenario
        .context("either --scenario <1|2> or --czinb is required")?;
    let scenario = Scenario::from_number(scenario)?;
    let (a, truth) = net::generate_scenario(scenario, args.n, &mut rng)?;
    io::save_adjacency_edges(&adjacency_path, &a)?;
    io::save_labels(&truth_path, &truth.labels)?;
    println!("wrote {}, {}", adjacency_path.display(), truth_path.display());
    Ok(())
}
