//! `plmcmc diagnose`: cost-matched convergence envelopes and auxiliary
//! decision-change frequencies.
//!
//! All RMSE values are in model coordinates (after whitening).

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use plmcmc_core::exec::Executor;
use plmcmc_core::rng::stream;
use plmcmc_core::sampler::{
    decision_change_probability, diagnose, AuxiliaryDensity, DecisionChange, DiagnoseConfig, GibbsProposal, InitPolicy,
    MaskedSample, Method, SamplerConfig,
};
use serde::Serialize;

use super::{aux_label, num, parse_aux, write_resolved, KernelArg};
use crate::error::{AppError, Result};
use crate::io::{load_csv, write_rows};
use crate::model_file::ModelDocument;

/// Stream domain for decision-change chains.
const DECISION_DOMAIN: u64 = 0x10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Gibbs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Incomplete rows to sample.
    #[arg(long)]
    pub samples: PathBuf,
    /// Complete version of `--samples`.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value = "diagnose")]
    pub out: PathBuf,
    /// Auxiliary scales to compare (`uniform` for the improper density).
    #[arg(long, value_delimiter = ',', default_value = "0.001,uniform", value_parser = parse_aux)]
    pub aux_scales: Vec<AuxiliaryDensity>,
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    pub perturb_scales: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub resample_scale: f64,
    #[arg(long, default_value_t = 0.5)]
    pub resample_prob: f64,
    #[arg(long, default_value_t = 0.5)]
    pub init_scale: f64,
    #[arg(long, value_enum, default_value_t = KernelArg::Tagged)]
    pub kernel_density: KernelArg,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Standard deviation of the Gibbs proposal in model coordinates.
    #[arg(long, default_value_t = 1.0)]
    pub gibbs_scale: f64,
    #[arg(long, default_value_t = 100)]
    pub chains: usize,
    #[arg(long, default_value_t = 10)]
    pub replications: usize,
    /// Flow transformations per chain.
    #[arg(long, default_value_t = 4000)]
    pub budget: usize,
    #[arg(long, default_value_t = 200)]
    pub checkpoint_every: usize,
    /// Proposals per sample for the decision-change statistic (0 to skip).
    #[arg(long, default_value_t = 1000)]
    pub decision_steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl DiagnoseArgs {
    pub fn methods(&self, dim: usize) -> Result<Vec<Method>> {
        let mut methods = Vec::new();
        for aux in &self.aux_scales {
            for &sp in &self.perturb_scales {
                let sampler = SamplerConfig {
                    perturb_scale: sp,
                    resample_scale: self.resample_scale,
                    resample_prob: self.resample_prob,
                    aux: *aux,
                    init: InitPolicy::PriorSample { scale: self.init_scale },
                    kernel_density: self.kernel_density.into(),
                    ..SamplerConfig::default()
                };
                sampler.validate()?;
                methods.push(Method::Plmcmc {
                    label: format!("aux={}/sp={}", aux_label(aux), sp),
                    sampler,
                });
            }
        }
        if let Some(Baseline::Gibbs) = self.baseline {
            methods.push(Method::Gibbs {
                label: format!("gibbs/s={}", self.gibbs_scale),
                proposal: GibbsProposal::new(vec![0.0; dim], vec![self.gibbs_scale; dim])?,
            });
        }
        if methods.is_empty() {
            return Err(AppError::usage("no samplers selected"));
        }
        Ok(methods)
    }
}

/// Rows of `--samples` with at least one missing cell, in model
/// coordinates and carrying their truth.
pub fn load_samples(doc: &ModelDocument, samples: &std::path::Path, truth: &std::path::Path) -> Result<Vec<MaskedSample>> {
    let table = load_csv(samples)?;
    let truth_table = load_csv(truth)?;
    if truth_table.columns != table.columns || truth_table.data.rows() != table.data.rows() || truth_table.data.missing_count() > 0 {
        return Err(AppError::usage(format!(
            "{}: truth must be a complete table matching the samples",
            truth.display()
        )));
    }
    let data = doc.to_model_space(&table.columns, &table.data)?;
    let full = doc.to_model_space(&truth_table.columns, &truth_table.data)?;
    let out: Vec<MaskedSample> = (0..data.rows())
        .filter(|&i| data.has_missing(i))
        .map(|i| MaskedSample::new(data.row(i), data.row_missing(i))?.with_truth(full.row(i).to_vec()))
        .collect::<plmcmc_core::Result<_>>()?;
    if out.is_empty() {
        return Err(AppError::usage(format!("{}: no row has a missing cell", samples.display())));
    }
    Ok(out)
}

pub fn run<E: Executor>(args: &DiagnoseArgs, exec: &E) -> Result<()> {
    write_resolved(&args.out, args)?;
    let doc = ModelDocument::load(&args.model)?;
    let samples = load_samples(&doc, &args.samples, &args.truth)?;
    let methods = args.methods(doc.flow.dim())?;
    let cfg = DiagnoseConfig {
        methods: methods.clone(),
        chains: args.chains,
        replications: args.replications,
        budget: args.budget,
        checkpoint_every: args.checkpoint_every,
        seed: args.seed,
    };
    let (curves, envelopes) = diagnose(&doc.flow, &samples, &cfg, exec)?;

    write_rows(
        &args.out.join("envelopes.csv"),
        &[
            "method",
            "kind",
            "transformations",
            "proposals",
            "rmse_mean",
            "rmse_min",
            "rmse_max",
            "acceptance_mean",
            "acceptance_std",
            "replications",
        ],
        envelopes.iter().map(|e| {
            vec![
                e.method.clone(),
                e.kind.clone(),
                e.transformations.to_string(),
                e.proposals.to_string(),
                num(e.rmse_mean),
                num(e.rmse_min),
                num(e.rmse_max),
                num(e.acceptance_mean),
                num(e.acceptance_std),
                e.replications.to_string(),
            ]
        }),
    )?;
    write_rows(
        &args.out.join("curves.csv"),
        &["method", "kind", "replication", "transformations", "proposals", "rmse", "acceptance_mean", "acceptance_std"],
        curves.iter().flat_map(|c| {
            let m = &methods[c.method];
            c.points.iter().map(move |p| {
                vec![
                    m.label().to_string(),
                    m.kind().to_string(),
                    c.replication.to_string(),
                    p.transformations.to_string(),
                    p.proposals.to_string(),
                    num(p.rmse),
                    num(p.acceptance_mean),
                    num(p.acceptance_std),
                ]
            })
        }),
    )?;

    let mut rows = Vec::new();
    if args.decision_steps > 0 {
        for (m, method) in methods.iter().enumerate() {
            let Method::Plmcmc { label, sampler } = method else { continue };
            let per_sample: Vec<DecisionChange> = exec
                .map(samples.len(), |s| {
                    let mut rng = stream(args.seed, DECISION_DOMAIN, s as u64, m as u64);
                    decision_change_probability(&doc.flow, &samples[s], sampler, &mut rng, args.decision_steps)
                })
                .into_iter()
                .collect::<plmcmc_core::Result<_>>()?;
            let mut total = DecisionChange {
                accepted: 0,
                rejected: 0,
                changed_given_accept: 0,
                changed_given_reject: 0,
            };
            for (s, d) in per_sample.iter().enumerate() {
                rows.push(decision_row(label, &s.to_string(), d));
                total.accepted += d.accepted;
                total.rejected += d.rejected;
                total.changed_given_accept += d.changed_given_accept;
                total.changed_given_reject += d.changed_given_reject;
            }
            rows.push(decision_row(label, "all", &total));
        }
    }
    write_rows(
        &args.out.join("decision_change.csv"),
        &["method", "sample", "accepted", "rejected", "p_change_given_accept", "p_change_given_reject"],
        rows,
    )
}

fn decision_row(label: &str, sample: &str, d: &DecisionChange) -> Vec<String> {
    vec![
        label.to_string(),
        sample.to_string(),
        d.accepted.to_string(),
        d.rejected.to_string(),
        num(d.p_change_given_accept()),
        num(d.p_change_given_reject()),
    ]
}
