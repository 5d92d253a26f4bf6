//! Command-line front end: data generation, model fitting, clustering
//! summaries, link-prediction scoring, and one-command reproduction of the
//! simulation and missing-link benchmarks.

mod commands;
mod config;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "blocksampler", version, about)]
struct Cli {
    /// Worker threads for replications and chains (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic benchmark network (and covariates for the
    /// covariate model) to CSV files.
    Generate(commands::generate::Args),
    /// Fit a model and record the posterior chain as JSON lines.
    Fit(commands::fit::Args),
    /// Summarize a chain: point-estimate partition, credible ball, and
    /// coefficient tables for the covariate model.
    Summarize(commands::summarize::Args),
    /// Score node pairs under a fitted chain's posterior predictive.
    Predict(commands::predict::Args),
    /// Reproduce the community-recovery simulation table.
    ReproduceSim(commands::reproduce::SimArgs),
    /// Reproduce the missing-link prediction table.
    ReproduceLinkpred(commands::reproduce::LinkpredArgs),
}

fn main() {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    let result = match cli.command {
        Command::Generate(args) => commands::generate::run(args),
        Command::Fit(args) => commands::fit::run(args),
        Command::Summarize(args) => commands::summarize::run(args),
        Command::Predict(args) => commands::predict::run(args),
        Command::ReproduceSim(args) => commands::reproduce::run_sim(args),
        Command::ReproduceLinkpred(args) => commands::reproduce::run_linkpred(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
