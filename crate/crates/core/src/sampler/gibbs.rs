//! Data-space Metropolis-within-Gibbs baseline.
//!
//! Each missing coordinate in turn receives an independence proposal
//! `N(mean_i, std_i^2)` and is accepted with the Metropolis-Hastings ratio of
//! model joint densities, corrected for the proposal density. Every proposal
//! costs one flow evaluation.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{mh_accept, Checkpoint, ChainTrace, MaskedSample, ProposalRecord};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::flow::{FlowModel, Workspace};

/// Per-coordinate proposal moments, indexed by data coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsProposal {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GibbsProposal {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        check_dim(mean.len(), std.len())?;
        check_finite(&mean, "proposal means")?;
        if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::usage("proposal standard deviations must be positive"));
        }
        Ok(Self { mean, std })
    }

    fn log_density(&self, i: usize, v: f64) -> f64 {
        let z = (v - self.mean[i]) / self.std[i];
        -0.5 * z * z
    }
}

#[derive(Debug, Clone)]
pub struct GibbsChain<'a> {
    model: &'a FlowModel,
    sample: &'a MaskedSample,
    proposal: &'a GibbsProposal,
    current: Vec<f64>,
    log_prob: f64,
    candidate: Vec<f64>,
    latent: Vec<f64>,
    ws: Workspace,
    pub proposed: u64,
    pub accepted: u64,
}

impl<'a> GibbsChain<'a> {
    /// Start from the full data vector `start`; its observed coordinates are
    /// overwritten with the conditioning values.
    pub fn new(model: &'a FlowModel, sample: &'a MaskedSample, proposal: &'a GibbsProposal, start: &[f64]) -> Result<Self> {
        check_dim(model.dim(), sample.dim())?;
        check_dim(model.dim(), proposal.mean.len())?;
        let mut current = Vec::new();
        sample.project_into(start, &mut current);
        let mut latent = Vec::new();
        let mut ws = Workspace::default();
        let log_prob = model.log_prob_with(&current, &mut latent, &mut ws)?;
        Ok(Self {
            model,
            sample,
            proposal,
            candidate: current.clone(),
            current,
            log_prob,
            latent,
            ws,
            proposed: 0,
            accepted: 0,
        })
    }

    /// Start from `forward` of a unit-scale prior draw.
    pub fn from_prior<R: Rng + ?Sized>(
        model: &'a FlowModel,
        sample: &'a MaskedSample,
        proposal: &'a GibbsProposal,
        rng: &mut R,
    ) -> Result<Self> {
        let xi = model.sample_prior(1.0, rng)?;
        let (x, _) = model.forward(&xi)?;
        Self::new(model, sample, proposal, &x)
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn completion(&self) -> Vec<f64> {
        self.sample.missing_indices().iter().map(|&i| self.current[i]).collect()
    }

    /// Update coordinate `i` with proposed value `value` and uniform `u`.
    pub fn update_with(&mut self, i: usize, value: f64, u: f64) -> bool {
        self.proposed += 1;
        self.candidate.copy_from_slice(&self.current);
        self.candidate[i] = value;
        let candidate_lp = self
            .model
            .log_prob_with(&self.candidate, &mut self.latent, &mut self.ws)
            .unwrap_or(f64::NAN);
        let log_alpha = candidate_lp - self.log_prob + self.proposal.log_density(i, self.current[i])
            - self.proposal.log_density(i, value);
        let accepted = mh_accept(log_alpha, u);
        if accepted {
            self.current[i] = value;
            self.log_prob = candidate_lp;
            self.accepted += 1;
        }
        accepted
    }

    pub fn update<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) -> bool {
        let n: f64 = StandardNormal.sample(rng);
        let value = self.proposal.mean[i] + self.proposal.std[i] * n;
        let u: f64 = rng.random();
        self.update_with(i, value, u)
    }
}

/// One sweep over the missing coordinates in index order. Returns the
/// number of accepted proposals.
pub fn gibbs_sweep<R: Rng + ?Sized>(chain: &mut GibbsChain<'_>, rng: &mut R) -> usize {
    let missing = chain.sample.missing_indices();
    missing.iter().filter(|&&i| chain.update(i, rng)).count()
}

/// Run `proposals` single-coordinate updates (cycling through the missing
/// coordinates) from a prior-generated start.
pub fn run_gibbs_chain<R: Rng + ?Sized>(
    model: &FlowModel,
    sample: &MaskedSample,
    proposal: &GibbsProposal,
    proposals: usize,
    checkpoint_interval: usize,
    record_proposals: bool,
    rng: &mut R,
) -> Result<(Vec<f64>, ChainTrace)> {
    if sample.is_fully_observed() {
        return Ok((Vec::new(), ChainTrace::default()));
    }
    let mut chain = GibbsChain::from_prior(model, sample, proposal, rng)?;
    let missing = sample.missing_indices();
    let mut trace = ChainTrace::default();
    let snapshot = |chain: &GibbsChain<'_>, n: usize| Checkpoint {
        proposals: n,
        accepted: chain.accepted,
        completion: chain.completion(),
    };
    trace.checkpoints.push(snapshot(&chain, 0));
    for n in 1..=proposals {
        let accepted = chain.update(missing[(n - 1) % missing.len()], rng);
        if record_proposals {
            trace.records.push(ProposalRecord {
                index: n - 1,
                accepted,
                log_target: chain.log_prob,
            });
        }
        if (checkpoint_interval > 0 && n % checkpoint_interval == 0) || n == proposals {
            trace.checkpoints.push(snapshot(&chain, n));
        }
    }
    Ok((chain.completion(), trace))
}
