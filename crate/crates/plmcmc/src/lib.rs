//! File formats, configuration and the `plmcmc` command line for
//! [`plmcmc_core`].

pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod io;
pub mod model_file;
pub mod report;

use clap::{Parser, Subcommand};

pub use error::{AppError, Result};

#[derive(Debug, Parser)]
#[command(name = "plmcmc", version, about = "Flow-based imputation with projected latent MCMC")]
pub struct Cli {
    /// Worker threads (0: one per core).
    #[arg(long, global = true, env = exec::THREADS_ENV)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a flow on incomplete data by Monte Carlo EM.
    Train(commands::train::TrainArgs),
    /// Impute the missing cells of a table.
    Impute(commands::impute::ImputeArgs),
    /// Write PL-MCMC traces for individual rows.
    Sample(commands::sample::SampleArgs),
    /// Compare samplers at matched flow-transformation budgets.
    Diagnose(commands::diagnose::DiagnoseArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    let pool = || exec::Parallel::new(cli.threads);
    match &cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            if args.dry_run {
                println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
                return Ok(());
            }
            let summary = commands::train::run(&cfg, &args.out, &pool()?)?;
            for m in &summary.metrics {
                println!("{} {}", m.metric, m.value);
            }
            if summary.aborted {
                log::warn!("training stopped early; outputs use the last finite model");
            }
        }
        Command::Impute(args) => {
            for m in commands::impute::run(args, &pool()?)? {
                println!("{} {}", m.metric, m.value);
            }
        }
        Command::Sample(args) => commands::sample::run(args, &pool()?)?,
        Command::Diagnose(args) => commands::diagnose::run(args, &pool()?)?,
    }
    Ok(())
}
