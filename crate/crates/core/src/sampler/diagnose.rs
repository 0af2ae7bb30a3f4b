//! Convergence envelopes and the auxiliary decision-change statistic.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gibbs::{run_gibbs_chain, GibbsProposal};
use super::{initial_latent, mh_accept, Chain, ChainTrace, MaskedSample, SamplerConfig};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::flow::FlowModel;
use crate::metrics::acceptance_summary;
use crate::rng::{domain, stream};

/// Frequencies with which a uniform-auxiliary chain would have decided
/// differently from the primary chain, given the same proposals and uniforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionChange {
    pub accepted: u64,
    pub rejected: u64,
    pub changed_given_accept: u64,
    pub changed_given_reject: u64,
}

impl DecisionChange {
    fn ratio(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    /// P(uniform chain rejects | primary accepted); 0 when nothing was accepted.
    pub fn p_change_given_accept(&self) -> f64 {
        Self::ratio(self.changed_given_accept, self.accepted)
    }

    /// P(uniform chain accepts | primary rejected); 0 when nothing was rejected.
    pub fn p_change_given_reject(&self) -> f64 {
        Self::ratio(self.changed_given_reject, self.rejected)
    }
}

/// Follow the chain defined by `config` for `n_steps` proposals and count
/// how often an improper-uniform auxiliary would flip its decisions.
pub fn decision_change_probability<R: Rng + ?Sized>(
    model: &FlowModel,
    sample: &MaskedSample,
    config: &SamplerConfig,
    rng: &mut R,
    n_steps: usize,
) -> Result<DecisionChange> {
    let mut counts = DecisionChange {
        accepted: 0,
        rejected: 0,
        changed_given_accept: 0,
        changed_given_reject: 0,
    };
    if sample.is_fully_observed() {
        return Ok(counts);
    }
    let latent = initial_latent(model, sample, &config.init, rng)?;
    let mut chain = Chain::new(model, sample, config, latent)?;
    for _ in 0..n_steps {
        let out = chain.step(rng);
        let shadow = match out.proposal_parts {
            Some(p) => {
                let log_alpha = (p.uniform_score() - out.current_parts.uniform_score()) + out.log_kernel_ratio;
                mh_accept(log_alpha, out.uniform)
            }
            None => false,
        };
        if out.accepted {
            counts.accepted += 1;
            counts.changed_given_accept += u64::from(!shadow);
        } else {
            counts.rejected += 1;
            counts.changed_given_reject += u64::from(shadow);
        }
    }
    Ok(counts)
}

/// Which sampler produced a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Plmcmc { label: String, sampler: SamplerConfig },
    Gibbs { label: String, proposal: GibbsProposal },
}

impl Method {
    pub fn label(&self) -> &str {
        match self {
            Method::Plmcmc { label, .. } | Method::Gibbs { label, .. } => label,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Method::Plmcmc { .. } => "plmcmc",
            Method::Gibbs { .. } => "gibbs",
        }
    }

    /// Flow transformations per proposal: PL-MCMC maps forward and back,
    /// the Gibbs baseline only evaluates the density.
    pub fn transformations_per_proposal(&self) -> usize {
        match self {
            Method::Plmcmc { .. } => 2,
            Method::Gibbs { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseConfig {
    pub methods: Vec<Method>,
    pub chains: usize,
    pub replications: usize,
    /// Total flow transformations per chain.
    pub budget: usize,
    /// Transformations between checkpoints.
    pub checkpoint_every: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub transformations: usize,
    pub proposals: usize,
    /// RMSE of the chain-averaged completion against the samples' truth.
    pub rmse: f64,
    pub acceptance_mean: f64,
    pub acceptance_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationCurve {
    pub method: usize,
    pub replication: usize,
    pub points: Vec<CurvePoint>,
}

/// Summary over replications at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub method: String,
    pub kind: String,
    pub transformations: usize,
    pub proposals: usize,
    pub rmse_mean: f64,
    pub rmse_min: f64,
    pub rmse_max: f64,
    pub acceptance_mean: f64,
    pub acceptance_std: f64,
    pub replications: usize,
}

fn run_one(
    model: &FlowModel,
    sample: &MaskedSample,
    method: &Method,
    budget: usize,
    every: usize,
    mut rng: crate::rng::StreamRng,
) -> Result<ChainTrace> {
    let per = method.transformations_per_proposal();
    match method {
        Method::Plmcmc { sampler, .. } => {
            let cfg = SamplerConfig {
                proposals: budget / per,
                checkpoint_interval: every / per,
                record_proposals: false,
                ..sampler.clone()
            };
            super::run_chain(model, sample, &cfg, &mut rng).map(|(_, t)| t)
        }
        Method::Gibbs { proposal, .. } => {
            run_gibbs_chain(model, sample, proposal, budget / per, every / per, false, &mut rng).map(|(_, t)| t)
        }
    }
}

/// Run every method for `replications` independent replications of
/// `chains` chains on each sample, recording the chain-averaged completion
/// RMSE and acceptance rate at matched flow-transformation checkpoints.
///
/// Samples must carry ground truth and at least one missing coordinate.
pub fn diagnose<E: Executor>(
    model: &FlowModel,
    samples: &[MaskedSample],
    config: &DiagnoseConfig,
    exec: &E,
) -> Result<(Vec<ReplicationCurve>, Vec<EnvelopeRow>)> {
    if samples.is_empty() || config.chains == 0 || config.replications == 0 {
        return Err(Error::usage("diagnose needs samples, chains and replications"));
    }
    if config.checkpoint_every == 0 || config.checkpoint_every % 2 != 0 || config.budget % config.checkpoint_every != 0 {
        return Err(Error::usage("checkpoint spacing must be even and divide the budget"));
    }
    let truths: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| match s.missing_truth() {
            Some(t) if !t.is_empty() => Ok(t),
            _ => Err(Error::usage("diagnose samples need truth and missing coordinates")),
        })
        .collect::<Result<_>>()?;
    let n_points = config.budget / config.checkpoint_every + 1;
    let mut curves = Vec::new();
    for (m, method) in config.methods.iter().enumerate() {
        let per = method.transformations_per_proposal();
        for r in 0..config.replications {
            let jobs = samples.len() * config.chains;
            let traces: Vec<ChainTrace> = exec
                .map(jobs, |j| {
                    let (s, c) = (j / config.chains, j % config.chains);
                    let round = ((m as u64) << 32) | r as u64;
                    let rng = stream(config.seed, domain::DIAGNOSE, ((s as u64) << 24) | c as u64, round);
                    run_one(model, &samples[s], method, config.budget, config.checkpoint_every, rng)
                })
                .into_iter()
                .collect::<Result<_>>()?;
            let mut points = Vec::with_capacity(n_points);
            let acc = acceptance_summary(&traces)?;
            for p in 0..n_points {
                let mut avg = Vec::new();
                for s in 0..samples.len() {
                    let mut mean = vec![0.0; truths[s].len()];
                    for t in &traces[s * config.chains..(s + 1) * config.chains] {
                        mean.iter_mut().zip(&t.checkpoints[p].completion).for_each(|(a, v)| *a += v);
                    }
                    avg.extend(mean.iter().map(|v| v / config.chains as f64));
                }
                let rmse = rmse_by_sample(&avg, &truths);
                let (acceptance_mean, acceptance_std) = if p == 0 {
                    (0.0, 0.0)
                } else {
                    (acc[p - 1].mean, acc[p - 1].std)
                };
                points.push(CurvePoint {
                    transformations: p * config.checkpoint_every,
                    proposals: p * config.checkpoint_every / per,
                    rmse,
                    acceptance_mean,
                    acceptance_std,
                });
            }
            curves.push(ReplicationCurve {
                method: m,
                replication: r,
                points,
            });
        }
    }
    let mut envelopes = Vec::new();
    for (m, method) in config.methods.iter().enumerate() {
        let mine: Vec<&ReplicationCurve> = curves.iter().filter(|c| c.method == m).collect();
        for p in 0..n_points {
            let rmses: Vec<f64> = mine.iter().map(|c| c.points[p].rmse).collect();
            let accs: Vec<f64> = mine.iter().map(|c| c.points[p].acceptance_mean).collect();
            let n = rmses.len() as f64;
            let acc_mean = accs.iter().sum::<f64>() / n;
            let acc_var = accs.iter().map(|a| (a - acc_mean) * (a - acc_mean)).sum::<f64>() / n;
            envelopes.push(EnvelopeRow {
                method: method.label().into(),
                kind: method.kind().into(),
                transformations: mine[0].points[p].transformations,
                proposals: mine[0].points[p].proposals,
                rmse_mean: rmses.iter().sum::<f64>() / n,
                rmse_min: rmses.iter().copied().fold(f64::INFINITY, f64::min),
                rmse_max: rmses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                acceptance_mean: acc_mean,
                acceptance_std: sqrt(acc_var),
                replications: mine.len(),
            });
        }
    }
    Ok((curves, envelopes))
}

/// Mean over samples of the per-sample RMSE of `pred` against `truths`.
fn rmse_by_sample(pred: &[f64], truths: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut off = 0;
    for t in truths {
        let ss: f64 = t.iter().zip(&pred[off..]).map(|(a, b)| (a - b) * (a - b)).sum();
        total += sqrt(ss / t.len() as f64);
        off += t.len();
    }
    total / truths.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowArch, PriorKind};
    use crate::sampler::AuxiliaryDensity;

    #[test]
    fn self_comparison_never_changes() {
        let arch = FlowArch {
            coupling_layers: 2,
            hidden_layers: 1,
            hidden_width: 4,
            prior: PriorKind::Normal,
        };
        let m = FlowModel::new(2, &arch, 5).unwrap();
        let s = MaskedSample::from_observed(2, &[(0, 0.3)]).unwrap();
        let cfg = SamplerConfig {
            aux: AuxiliaryDensity::ImproperUniform,
            ..Default::default()
        };
        let d = decision_change_probability(&m, &s, &cfg, &mut stream(1, 0, 0, 0), 2000).unwrap();
        assert_eq!(d.accepted + d.rejected, 2000);
        assert_eq!(d.p_change_given_accept(), 0.0);
        assert_eq!(d.p_change_given_reject(), 0.0);
    }
}
