use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use blocksampler_core::kernel::FitSchedule;
use blocksampler_core::net::{self, CovariateLaw, Scenario};
use blocksampler_core::predict::{
    run_linkpred_experiment, LinkpredConfig, LinkpredReport, ModelKind,
};
use blocksampler_core::summary::summarize_clustering;
use blocksampler_core::RngStream;
use clap::Args as ClapArgs;
use rayon::prelude::*;

use super::mean_sd;

#[derive(ClapArgs)]
pub struct SimArgs {
    /// Paper scale (n=150, 50 replications) instead of the desk scale
    /// (n=100, 10 replications).
    #[arg(long)]
    full: bool,

    #[arg(long, env = "BLOCKSAMPLER_SEED", default_value_t = 1)]
    seed: u64,

    #[arg(long)]
    iterations: Option<u64>,

    #[arg(long)]
    replications: Option<usize>,

    #[arg(long)]
    nodes: Option<usize>,

    /// Output directory for the report and per-replication CSV.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone)]
struct SimRow {
    model: ModelKind,
    scenario: u32,
    k_hat: Vec<f64>,
    vi_truth: Vec<f64>,
    vi_ball: Vec<f64>,
}

pub(crate) fn simulate_one(
    model: ModelKind,
    scenario: Scenario,
    n: usize,
    iterations: u64,
    seed: u64,
) -> Result<(usize, f64, f64)> {
    let mut rng = RngStream::new(seed, 9_000);
    let (a, truth) = net::generate_scenario(scenario, n, &mut rng)?;
    let schedule = FitSchedule {
        iterations,
        burn_in: iterations / 2,
        thinning: 1,
        chains: 1,
        seed,
        tempered_burn_in: true,
    };
    let chain = blocksampler_core::predict::fit_model(model, &a, None, &schedule)?;
    let summary = summarize_clustering(&chain, Some(&truth.labels), 0.95)?;
    Ok((summary.num_communities, summary.vi_to_truth.unwrap(), summary.ball_radius))
}

pub fn run_sim(args: SimArgs) -> Result<()> {
    let (n, reps, iterations) = if args.full { (150, 50, 4000) } else { (100, 10, 4000) };
    let n = args.nodes.unwrap_or(n);
    let reps = args.replications.unwrap_or(reps);
    let iterations = args.iterations.unwrap_or(iterations);
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let cells: Vec<(ModelKind, u32)> = vec![
        (ModelKind::Zinb, 1),
        (ModelKind::Zinb, 2),
        (ModelKind::Zip, 1),
        (ModelKind::Zip, 2),
    ];
    let mut rows = Vec::new();
    let mut per_rep = Vec::new();
    for (model, scenario_num) in cells {
        let scenario = Scenario::from_number(scenario_num)?;
        let results: Vec<Result<(usize, f64, f64)>> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                simulate_one(
                    model,
                    scenario,
                    n,
                    iterations,
                    args.seed.wrapping_add(rep as u64),
                )
            })
            .collect();
        let mut row = SimRow {
            model,
            scenario: scenario_num,
            k_hat: Vec::new(),
            vi_truth: Vec::new(),
            vi_ball: Vec::new(),
        };
        for (rep, res) in results.into_iter().enumerate() {
            let (k, vi_t, vi_b) = res?;
            per_rep.push((model, scenario_num, rep, k, vi_t, vi_b));
            row.k_hat.push(k as f64);
            row.vi_truth.push(vi_t);
            row.vi_ball.push(vi_b);
        }
        rows.push(row);
    }

    let csv_path = args.out_dir.join("sim_replications.csv");
    let mut f = std::fs::File::create(&csv_path)?;
    writeln!(f, "model,scenario,replication,k_hat,vi_truth,vi_ball")?;
    for (model, scenario, rep, k, vi_t, vi_b) in &per_rep {
        writeln!(f, "{},{},{},{},{},{}", model.name(), scenario, rep + 1, k, vi_t, vi_b)?;
    }

    let report_path = args.out_dir.join("sim_report.txt");
    let mut f = std::fs::File::create(&report_path)?;
    writeln!(
        f,
        "Community recovery over {reps} replications (n = {n}, {iterations} iterations)\n"
    )?;
    writeln!(
        f,
        "{:10} {:>9} {:>18} {:>18} {:>18}",
        "model", "scenario", "K-hat", "VI(est, truth)", "VI ball radius"
    )?;
    let fmt = |xs: &[f64]| {
        let (m, s) = mean_sd(xs);
        format!("{m:.3} ({s:.3})")
    };
    for row in &rows {
        writeln!(
            f,
            "{:10} {:>9} {:>18} {:>18} {:>18}",
            row.model.name().to_uppercase() + "-SBM",
            row.scenario,
            fmt(&row.k_hat),
            fmt(&row.vi_truth),
            fmt(&row.vi_ball)
        )?;
    }
    let text = std::fs::read_to_string(&report_path)?;
    print!("{text}");
    println!("report: {}, per-replication: {}", report_path.display(), csv_path.display());
    Ok(())
}

#[derive(ClapArgs)]
pub struct LinkpredArgs {
    /// Weighted network CSV; without it a planted covariate benchmark is
    /// generated instead.
    #[arg(long, requires = "covariates")]
    adjacency: Option<PathBuf>,

    #[arg(long, default_value = "edge-list")]
    format: String,

    #[arg(long)]
    nodes: Option<usize>,

    /// Pairwise covariates matching the network.
    #[arg(long)]
    covariates: Option<PathBuf>,

    /// Append an intercept column to loaded covariates.
    #[arg(long)]
    intercept: bool,

    /// Disable standardization of loaded covariates.
    #[arg(long)]
    no_standardize: bool,

    /// 50 replications instead of 10.
    #[arg(long)]
    full: bool,

    #[arg(long, env = "BLOCKSAMPLER_SEED", default_value_t = 1)]
    seed: u64,

    #[arg(long)]
    replications: Option<usize>,

    #[arg(long, default_value_t = 2000)]
    iterations: u64,

    #[arg(long)]
    out_dir: PathBuf,
}

pub fn run_linkpred(args: LinkpredArgs) -> Result<()> {
    let reps = args.replications.unwrap_or(if args.full { 50 } else { 10 });
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let (a, cov, source) = match (&args.adjacency, &args.covariates) {
        (Some(adj_path), Some(cov_path)) => {
            let a = super::load_adjacency_arg(adj_path, &args.format, args.nodes)?;
            let mut cfg = crate::config::RunConfig::default();
            cfg.intercept = args.intercept;
            cfg.standardize = !args.no_standardize;
            let cov = super::load_covariates_arg(cov_path, a.num_nodes(), &cfg)?;
            (a, cov, format!("user data ({})", adj_path.display()))
        }
        _ => {
            // Planted benchmark (the generator the acceptance tests pin).
            let mut rng = RngStream::new(args.seed, 7_000);
            let (beta_count, beta_zero, r) =
                super::generate::planted_czinb_coefficients(3);
            let (a, cov, _) = net::generate_czinb_network(
                60,
                3,
                2,
                &beta_count,
                &beta_zero,
                r,
                CovariateLaw::InterceptPlusNormal,
                &mut rng,
            )?;
            (a, cov, "planted covariate benchmark (n=60, q=3)".to_string())
        }
    };

    let mut reports: Vec<LinkpredReport> = Vec::new();
    for model in [ModelKind::Czinb, ModelKind::Zinb] {
        let cfg = LinkpredConfig {
            model,
            replications: reps,
            mask_fraction: 0.2,
            iterations: args.iterations,
            burn_in: args.iterations / 2,
            thinning: 1,
            master_seed: args.seed,
        };
        let covs = if model.needs_covariates() { Some(&cov) } else { None };
        reports.push(run_linkpred_experiment(&a, covs, &cfg)?);
    }

    let csv_path = args.out_dir.join("linkpred_replications.csv");
    let mut f = std::fs::File::create(&csv_path)?;
    writeln!(f, "model,replication,auc,rmse")?;
    for report in &reports {
        for rep in &report.replications {
            writeln!(f, "{},{},{},{}", report.model, rep.index + 1, rep.auc, rep.rmse)?;
        }
    }

    let report_path = args.out_dir.join("linkpred_report.txt");
    let mut f = std::fs::File::create(&report_path)?;
    writeln!(f, "Missing-link prediction on {source}")?;
    writeln!(f, "{reps} replications, 20% of nonzero pairs masked per replication\n")?;
    writeln!(f, "{:12} {:>16} {:>16} {:>8}", "model", "AUC", "RMSE", "failed")?;
    for report in &reports {
        writeln!(
            f,
            "{:12} {:>16} {:>16} {:>8}",
            report.model.to_uppercase() + "-SBM",
            format!("{:.3} ({:.3})", report.auc_mean, report.auc_sd),
            format!("{:.3} ({:.3})", report.rmse_mean, report.rmse_sd),
            report.failed.len()
        )?;
    }
    let text = std::fs::read_to_string(&report_path)?;
    print!("{text}");
    println!("report: {}, per-replication: {}", report_path.display(), csv_path.display());
    Ok(())
}
