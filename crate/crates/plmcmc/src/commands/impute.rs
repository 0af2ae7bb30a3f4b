//! `plmcmc impute`: fill a table's missing cells with a trained model.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use plmcmc_core::exec::Executor;
use plmcmc_core::mcem::multi_chain_impute;
use plmcmc_core::metrics::{column_std, nmse, reconstruction_rmse};
use serde::Serialize;

use super::{write_resolved, SamplerArgs};
use crate::error::{AppError, Result};
use crate::io::{load_csv, write_filled};
use crate::model_file::ModelDocument;
use crate::report::{write_metrics, MetricReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Final state of a single chain.
    Ind,
    /// Mean of the final states of `--chains` chains.
    Avg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ImputeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Table with missing cells.
    #[arg(long)]
    pub data: PathBuf,
    /// Complete table for scoring.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value = "impute")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 25)]
    pub chains: usize,
    #[arg(long, value_enum, default_value_t = Mode::Avg)]
    pub mode: Mode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Clamp each chain's imputations to the observed column range.
    #[arg(long)]
    pub clamp: bool,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

pub fn run<E: Executor>(args: &ImputeArgs, exec: &E) -> Result<Vec<MetricReport>> {
    let digest = write_resolved(&args.out, args)?;
    let doc = ModelDocument::load(&args.model)?;
    let table = load_csv(&args.data)?;
    let model_data = doc.to_model_space(&table.columns, &table.data)?;
    let chains = match args.mode {
        Mode::Ind => 1,
        Mode::Avg => args.chains,
    };
    let range = if args.clamp { Some(model_data.observed_range()?) } else { None };
    let imputed = multi_chain_impute(
        &doc.flow,
        &model_data,
        &args.sampler.config(),
        chains,
        range.as_deref(),
        args.seed,
        0,
        exec,
    )?;
    let chosen = match args.mode {
        Mode::Ind => imputed.individual,
        Mode::Avg => imputed.average,
    };
    let filled = doc.preprocessing.to_data_space(&chosen)?;
    write_filled(&args.out.join("imputed.csv"), &table.columns, &filled)?;

    let mut metrics = Vec::new();
    if let Some(path) = &args.truth {
        let truth = load_csv(path)?;
        if truth.columns != table.columns || truth.data.rows() != table.data.rows() || truth.data.missing_count() > 0 {
            return Err(AppError::usage(format!(
                "{}: truth must be a complete table matching the data",
                path.display()
            )));
        }
        let cols = truth.data.cols();
        let missing = table.data.missing();
        let n = table.data.missing_count();
        let sigmas = column_std(truth.data.values(), cols)?;
        metrics.push(MetricReport::new("nmse", nmse(filled.values(), truth.data.values(), missing, cols, &sigmas)?, n, &digest));
        metrics.push(MetricReport::new("rmse", reconstruction_rmse(filled.values(), truth.data.values(), missing, cols)?, n, &digest));
        write_metrics(&args.out.join("metrics.json"), &metrics)?;
    }
    Ok(metrics)
}
