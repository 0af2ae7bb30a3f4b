//! `plmcmc sample`: PL-MCMC traces for individual rows, and unconditional
//! draws from the flow.

use std::path::PathBuf;

use clap::Args;
use plmcmc_core::data::Dataset;
use plmcmc_core::exec::Executor;
use plmcmc_core::rng::{stream, ChainKey};
use plmcmc_core::sampler::{run_chain, ChainTrace, MaskedSample};
use serde::Serialize;

use super::{num, write_resolved, SamplerArgs};
use crate::error::{AppError, Result};
use crate::io::{load_csv, write_filled, write_rows};
use crate::model_file::ModelDocument;

/// Stream domain for unconditional draws.
const DRAW_DOMAIN: u64 = 0x11;

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Table whose incomplete rows are sampled.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Zero-based rows to sample (default: every incomplete row).
    #[arg(long, value_delimiter = ',')]
    pub rows: Vec<usize>,
    #[arg(long, default_value = "sample")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Proposals between snapshots of the completed row.
    #[arg(long, default_value_t = 100)]
    pub snapshot_every: usize,
    /// Also write this many unconditional draws.
    #[arg(long)]
    pub unconditional: Option<usize>,
    /// Prior scale for unconditional draws.
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

pub fn run<E: Executor>(args: &SampleArgs, exec: &E) -> Result<()> {
    write_resolved(&args.out, args)?;
    let doc = ModelDocument::load(&args.model)?;
    if args.data.is_none() && args.unconditional.is_none() {
        return Err(AppError::usage("nothing to do: pass --data and/or --unconditional"));
    }
    if let Some(path) = &args.data {
        let table = load_csv(path)?;
        let model_data = doc.to_model_space(&table.columns, &table.data)?;
        let rows: Vec<usize> = if args.rows.is_empty() {
            (0..model_data.rows()).filter(|&i| model_data.has_missing(i)).collect()
        } else {
            args.rows.clone()
        };
        if let Some(&bad) = rows.iter().find(|&&i| i >= model_data.rows()) {
            return Err(AppError::usage(format!("row {bad} is out of range")));
        }
        let cfg = plmcmc_core::sampler::SamplerConfig {
            checkpoint_interval: args.snapshot_every,
            record_proposals: true,
            ..args.sampler.config()
        };
        let results: Vec<(MaskedSample, ChainTrace)> = exec
            .map(rows.len(), |k| {
                let i = rows[k];
                let sample = MaskedSample::new(model_data.row(i), model_data.row_missing(i))?;
                let mut rng = ChainKey::new(args.seed, i as u64, 0).chain(0);
                let (_, trace) = run_chain(&doc.flow, &sample, &cfg, &mut rng)?;
                Ok((sample, trace))
            })
            .into_iter()
            .collect::<Result<_>>()?;

        let trace_rows = rows.iter().zip(&results).flat_map(|(&i, (_, t))| {
            t.records
                .iter()
                .map(move |r| vec![i.to_string(), r.index.to_string(), u8::from(r.accepted).to_string(), num(r.log_target)])
        });
        write_rows(&args.out.join("trace.csv"), &["row", "proposal_index", "accepted", "log_target"], trace_rows)?;

        let mut header = vec!["row", "proposals", "accepted"];
        header.extend(table.columns.iter().map(String::as_str));
        let mut snapshot_rows = Vec::new();
        for (&i, (sample, trace)) in rows.iter().zip(&results) {
            for c in &trace.checkpoints {
                let full = sample.complete_with(&c.completion)?;
                let one = Dataset::new(full.len(), full, model_data.row_missing(i).to_vec())?;
                let data = doc.preprocessing.to_data_space(&one)?;
                let mut cells = vec![i.to_string(), c.proposals.to_string(), c.accepted.to_string()];
                cells.extend(data.values().iter().map(|v| num(*v)));
                snapshot_rows.push(cells);
            }
        }
        write_rows(&args.out.join("snapshots.csv"), &header, snapshot_rows)?;
    }
    if let Some(n) = args.unconditional {
        let draws: Vec<Vec<f64>> = exec
            .map(n, |k| {
                let mut rng = stream(args.seed, DRAW_DOMAIN, k as u64, 0);
                let xi = doc.flow.sample_prior(args.temperature, &mut rng)?;
                Ok(doc.flow.forward(&xi)?.0)
            })
            .into_iter()
            .collect::<Result<_>>()?;
        let dim = doc.flow.dim();
        let model_space = Dataset::complete(dim, draws.concat())?;
        let data = doc.preprocessing.to_data_space(&model_space)?;
        write_filled(&args.out.join("unconditional.csv"), &doc.columns, &data)?;
    }
    Ok(())
}
