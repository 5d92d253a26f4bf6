use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use blocksampler_core::chain::ChainStore;
use blocksampler_core::net::io;
use blocksampler_core::summary::{summarize_clustering, summarize_coefficients};
use clap::Args as ClapArgs;

#[derive(ClapArgs)]
pub struct Args {
    /// Chain file from `fit`.
    #[arg(long)]
    chain: PathBuf,

    /// True labels CSV (`node,label`) for a VI-to-truth column.
    #[arg(long)]
    truth: Option<PathBuf>,

    /// Credible-ball level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,

    /// Output prefix; writes <prefix>_partition.csv, <prefix>_summary.txt
    /// and, for covariate-model chains, <prefix>_coefficients.csv.
    #[arg(long)]
    out_prefix: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let chain = ChainStore::load(&args.chain)?;
    let truth = args.truth.as_ref().map(|p| io::load_labels(p)).transpose()?;
    let summary = summarize_clustering(&chain, truth.as_deref(), args.level)?;

    let prefix = args.out_prefix.to_string_lossy();
    let partition_path = PathBuf::from(format!("{prefix}_partition.csv"));
    io::save_labels(&partition_path, &summary.labels)?;

    let summary_path = PathBuf::from(format!("{prefix}_summary.txt"));
    let mut f = std::fs::File::create(&summary_path)
        .with_context(|| format!("creating {}", summary_path.display()))?;
    writeln!(f, "model: {}", chain.meta.model)?;
    writeln!(f, "kept draws: {}", chain.len())?;
    writeln!(f, "estimated communities: {}", summary.num_communities)?;
    writeln!(f, "credible ball radius (level {}): {:.6}", args.level, summary.ball_radius)?;
    if let Some(vi) = summary.vi_to_truth {
        writeln!(f, "VI to truth: {vi:.6}")?;
    }
    println!(
        "K-hat = {}, ball radius = {:.4}{}",
        summary.num_communities,
        summary.ball_radius,
        summary
            .vi_to_truth
            .map_or(String::new(), |vi| format!(", VI to truth = {vi:.4}"))
    );

    if chain.meta.model == "czinb" {
        let coeff_path = PathBuf::from(format!("{prefix}_coefficients.csv"));
        let mut f = std::fs::File::create(&coeff_path)
            .with_context(|| format!("creating {}", coeff_path.display()))?;
        writeln!(f, "block_l,block_m,link,coord,mean,lower,upper,draws")?;
        let k = summary.num_communities;
        for l in 0..k {
            for m in l..k {
                for (link, name) in [(0usize, "count"), (1, "zero")] {
                    match summarize_coefficients(&chain, &summary.labels, (l, m), link, args.level)
                    {
                        Ok(cs) => {
                            for (coord, (mean, lo, hi)) in cs.coords.iter().enumerate() {
                                writeln!(
                                    f,
                                    "{},{},{},{},{},{},{},{}",
                                    l + 1,
                                    m + 1,
                                    name,
                                    coord + 1,
                                    mean,
                                    lo,
                                    hi,
                                    cs.draws_used
                                )?;
                            }
                        }
                        Err(err) => eprintln!("skipping block ({l},{m}) {name}: {err}"),
                    }
                }
            }
        }
        println!("coefficient table: {}", coeff_path.display());
    }

    println!("partition: {}, summary: {}", partition_path.display(), summary_path.display());
    Ok(())
}
