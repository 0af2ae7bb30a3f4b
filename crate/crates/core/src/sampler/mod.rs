//! Projected latent Metropolis-Hastings (PL-MCMC).
//!
//! The chain lives in latent space. For a state `xi` the flow produces
//! `y = forward(xi)`; the missing block `y_M` is paired with the observed
//! values to give the candidate completion `(y_M; x_O)`. The target is
//!
//! ```text
//! log t(xi) = log q(y_O) + log p(y_M; x_O) + log|det d forward / d xi|
//! ```
//!
//! where `q` is an auxiliary density on the generated observed block. Its
//! stationary `y_M` marginal is the model conditional `p(y_M | x_O)` for any
//! positive `q`.

mod diagnose;
mod gibbs;

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::exec::Executor;
use crate::flow::{FlowModel, Workspace, LN_2PI};
use crate::rng::{ChainKey, StreamRng};

pub use diagnose::{
    decision_change_probability, diagnose, CurvePoint, DecisionChange, DiagnoseConfig, EnvelopeRow, Method,
    ReplicationCurve,
};
pub use gibbs::{gibbs_sweep, run_gibbs_chain, GibbsChain, GibbsProposal};

/// One data row split into observed and missing coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSample {
    dim: usize,
    observed_idx: Vec<usize>,
    observed: Vec<f64>,
    missing: Vec<usize>,
    truth: Option<Vec<f64>>,
}

impl MaskedSample {
    /// `missing[i]` marks coordinate `i` as missing; the values at missing
    /// positions are ignored.
    pub fn new(values: &[f64], missing: &[bool]) -> Result<Self> {
        check_dim(values.len(), missing.len())?;
        let missing_idx: Vec<usize> = (0..values.len()).filter(|&i| missing[i]).collect();
        let observed_idx: Vec<usize> = (0..values.len()).filter(|&i| !missing[i]).collect();
        let observed: Vec<f64> = observed_idx.iter().map(|&i| values[i]).collect();
        check_finite(&observed, "observed values")?;
        Ok(Self {
            dim: values.len(),
            observed_idx,
            observed,
            missing: missing_idx,
            truth: None,
        })
    }

    /// Build from `(index, value)` pairs; every other coordinate is missing.
    pub fn from_observed(dim: usize, observed: &[(usize, f64)]) -> Result<Self> {
        let mut values = vec![0.0; dim];
        let mut missing = vec![true; dim];
        for &(i, v) in observed {
            if i >= dim {
                return Err(Error::usage("observed index out of range"));
            }
            values[i] = v;
            missing[i] = false;
        }
        Self::new(&values, &missing)
    }

    /// Attach a complete ground-truth vector for scoring.
    pub fn with_truth(mut self, truth: Vec<f64>) -> Result<Self> {
        check_dim(self.dim, truth.len())?;
        check_finite(&truth, "ground truth")?;
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn observed_indices(&self) -> &[usize] {
        &self.observed_idx
    }

    pub fn observed_values(&self) -> &[f64] {
        &self.observed
    }

    pub fn missing_indices(&self) -> &[usize] {
        &self.missing
    }

    pub fn truth(&self) -> Option<&[f64]> {
        self.truth.as_deref()
    }

    /// Ground-truth values of the missing coordinates.
    pub fn missing_truth(&self) -> Option<Vec<f64>> {
        self.truth.as_ref().map(|t| self.missing.iter().map(|&i| t[i]).collect())
    }

    pub fn is_fully_observed(&self) -> bool {
        self.missing.is_empty()
    }

    /// `y` with its observed block replaced by the conditioning values.
    pub fn project_into(&self, y: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(y);
        for (&i, &v) in self.observed_idx.iter().zip(&self.observed) {
            out[i] = v;
        }
    }

    /// Full data vector with `completion` written into the missing slots.
    pub fn complete_with(&self, completion: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.missing.len(), completion.len())?;
        let mut out = vec![0.0; self.dim];
        for (&i, &v) in self.observed_idx.iter().zip(&self.observed) {
            out[i] = v;
        }
        for (&i, &v) in self.missing.iter().zip(completion) {
            out[i] = v;
        }
        Ok(out)
    }
}

/// Density over the generated observed block `y_O`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuxiliaryDensity {
    /// Isotropic normal centred on the observed values, multiplied by
    /// `exp(log_weight)`. The weight has no effect on the chain.
    Normal {
        scale: f64,
        #[serde(default)]
        log_weight: f64,
    },
    ImproperUniform,
}

impl AuxiliaryDensity {
    pub fn normal(scale: f64) -> Self {
        AuxiliaryDensity::Normal { scale, log_weight: 0.0 }
    }

    /// State-dependent part of `log q`.
    pub fn log_kernel(&self, generated: &[f64], observed: &[f64]) -> f64 {
        match *self {
            AuxiliaryDensity::ImproperUniform => 0.0,
            AuxiliaryDensity::Normal { scale, .. } => {
                let ss: f64 = generated.iter().zip(observed).map(|(a, b)| (a - b) * (a - b)).sum();
                -ss / (2.0 * scale * scale)
            }
        }
    }

    /// State-independent part of `log q` over `n` coordinates.
    pub fn log_constant(&self, n: usize) -> f64 {
        match *self {
            AuxiliaryDensity::ImproperUniform => 0.0,
            AuxiliaryDensity::Normal { scale, log_weight } => {
                log_weight - n as f64 * (log(scale) + 0.5 * LN_2PI)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            AuxiliaryDensity::Normal { scale, log_weight } if !(scale > 0.0 && scale.is_finite()) || !log_weight.is_finite() => {
                Err(Error::usage("auxiliary scale must be positive and finite"))
            }
            _ => Ok(()),
        }
    }
}

/// How the proposal density enters the acceptance ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelDensity {
    /// Attribute each move entirely to the kernel that produced it.
    #[default]
    Tagged,
    /// Evaluate the full two-component mixture density in both directions.
    ExactMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitPolicy {
    /// Latent prior draw with every coordinate multiplied by `scale`.
    PriorSample { scale: f64 },
    /// Fill each missing coordinate with a value drawn from the row's own
    /// observed values, then map to latent space. Rows with nothing
    /// observed fall back to a unit-scale prior draw.
    ObservedFill,
    ProvidedLatent { latent: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub perturb_scale: f64,
    pub resample_scale: f64,
    /// Probability of using the resample kernel for a proposal.
    pub resample_prob: f64,
    pub aux: AuxiliaryDensity,
    pub proposals: usize,
    pub init: InitPolicy,
    pub kernel_density: KernelDensity,
    /// Record a completion every this many proposals (0: start and end only).
    pub checkpoint_interval: usize,
    /// Keep a per-proposal record in the trace.
    pub record_proposals: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            perturb_scale: 0.05,
            resample_scale: 0.5,
            resample_prob: 0.5,
            aux: AuxiliaryDensity::normal(1e-3),
            proposals: 1000,
            init: InitPolicy::PriorSample { scale: 0.5 },
            kernel_density: KernelDensity::Tagged,
            checkpoint_interval: 0,
            record_proposals: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.perturb_scale) || !pos(self.resample_scale) {
            return Err(Error::usage("kernel scales must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.resample_prob) {
            return Err(Error::usage("resample probability must lie in [0, 1]"));
        }
        if let InitPolicy::PriorSample { scale } = self.init {
            if !pos(scale) {
                return Err(Error::usage("initial prior scale must be positive"));
            }
        }
        self.aux.validate()?;
        if self.resample_prob > 0.0 && self.perturb_scale > self.resample_scale / 10.0 {
            log::warn!(
                "perturbation scale {} is not much smaller than resample scale {}",
                self.perturb_scale,
                self.resample_scale
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelTag {
    Perturb,
    Resample,
}

/// Draw a proposal into `out`. The kernel-choice uniform is always consumed
/// so the stream layout does not depend on the mixture weight.
pub fn propose<R: Rng + ?Sized>(xi: &[f64], config: &SamplerConfig, rng: &mut R, out: &mut Vec<f64>) -> KernelTag {
    let u: f64 = rng.random();
    out.clear();
    if u < config.resample_prob {
        out.extend(xi.iter().map(|_| {
            let n: f64 = StandardNormal.sample(rng);
            config.resample_scale * n
        }));
        KernelTag::Resample
    } else {
        out.extend(xi.iter().map(|&v| {
            let n: f64 = StandardNormal.sample(rng);
            v + config.perturb_scale * n
        }));
        KernelTag::Perturb
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + log(exp(a - m) + exp(b - m))
}

/// `log g(to | from)` of the full mixture kernel.
fn log_mixture_density(from: &[f64], to: &[f64], config: &SamplerConfig) -> f64 {
    let d = from.len() as f64;
    let normal = |ss: f64, s: f64| -ss / (2.0 * s * s) - d * (log(s) + 0.5 * LN_2PI);
    let diff: f64 = from.iter().zip(to).map(|(a, b)| (a - b) * (a - b)).sum();
    let w = config.resample_prob;
    log_add_exp(
        log(1.0 - w) + normal(diff, config.perturb_scale),
        log(w) + normal(sq_norm(to), config.resample_scale),
    )
}

/// `log g(xi | xi') - log g(xi' | xi)`.
pub fn log_kernel_ratio(xi: &[f64], proposal: &[f64], tag: KernelTag, config: &SamplerConfig) -> f64 {
    match config.kernel_density {
        KernelDensity::Tagged => match tag {
            KernelTag::Perturb => 0.0,
            KernelTag::Resample => {
                (sq_norm(proposal) - sq_norm(xi)) / (2.0 * config.resample_scale * config.resample_scale)
            }
        },
        KernelDensity::ExactMixture => {
            log_mixture_density(proposal, xi, config) - log_mixture_density(xi, proposal, config)
        }
    }
}

/// Components of the target density at one latent state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TargetParts {
    /// State-dependent part of `log q(y_O)`.
    pub log_aux: f64,
    /// State-independent part of `log q(y_O)`.
    pub log_aux_const: f64,
    /// `log p(y_M; x_O)`.
    pub log_joint: f64,
    /// `log|det d forward / d xi|`.
    pub logdet: f64,
}

impl TargetParts {
    /// `log q(y_O) + log p(y_M; x_O)`.
    pub fn log_target(&self) -> f64 {
        self.log_aux + self.log_aux_const + self.log_joint
    }

    /// Latent-space score entering the acceptance ratio, without the
    /// constant part of `q`.
    pub fn score(&self) -> f64 {
        self.log_aux + self.log_joint + self.logdet
    }

    /// Score as seen by a chain using an improper uniform auxiliary.
    pub fn uniform_score(&self) -> f64 {
        self.log_joint + self.logdet
    }
}

/// Evaluates targets for one (model, sample, auxiliary) triple, reusing
/// buffers across calls.
#[derive(Debug, Clone)]
pub struct TargetEvaluator<'a> {
    model: &'a FlowModel,
    sample: &'a MaskedSample,
    aux: AuxiliaryDensity,
    ws: Workspace,
    projected: Vec<f64>,
    latent: Vec<f64>,
    generated_obs: Vec<f64>,
}

impl<'a> TargetEvaluator<'a> {
    pub fn new(model: &'a FlowModel, sample: &'a MaskedSample, aux: AuxiliaryDensity) -> Result<Self> {
        check_dim(model.dim(), sample.dim())?;
        aux.validate()?;
        Ok(Self {
            model,
            sample,
            aux,
            ws: Workspace::default(),
            projected: Vec::new(),
            latent: Vec::new(),
            generated_obs: Vec::new(),
        })
    }

    pub fn model(&self) -> &'a FlowModel {
        self.model
    }

    pub fn sample(&self) -> &'a MaskedSample {
        self.sample
    }

    /// Evaluate the target at `xi`, leaving `forward(xi)` in `y`.
    pub fn evaluate(&mut self, xi: &[f64], y: &mut Vec<f64>) -> Result<TargetParts> {
        let logdet = self.model.forward_with(xi, y, &mut self.ws)?;
        check_finite(y, "generated point")?;
        self.sample.project_into(y, &mut self.projected);
        let log_joint = self.model.log_prob_with(&self.projected, &mut self.latent, &mut self.ws)?;
        let sample = self.sample;
        let parts = if sample.observed_idx.is_empty() {
            // q over an empty block is a constant
            TargetParts {
                log_aux: 0.0,
                log_aux_const: 0.0,
                log_joint,
                logdet,
            }
        } else {
            self.generated_obs.clear();
            self.generated_obs.extend(sample.observed_idx.iter().map(|&i| y[i]));
            TargetParts {
                log_aux: self.aux.log_kernel(&self.generated_obs, &sample.observed),
                log_aux_const: self.aux.log_constant(sample.observed.len()),
                log_joint,
                logdet,
            }
        };
        if !parts.score().is_finite() {
            return Err(Error::NonFinite("target density"));
        }
        Ok(parts)
    }
}

/// `log q(y_O) + log p(y_M; x_O)` at `xi`, with its components.
pub fn log_target(
    model: &FlowModel,
    xi: &[f64],
    sample: &MaskedSample,
    aux: AuxiliaryDensity,
) -> Result<(f64, TargetParts)> {
    let mut eval = TargetEvaluator::new(model, sample, aux)?;
    let parts = eval.evaluate(xi, &mut Vec::new())?;
    Ok((parts.log_target(), parts))
}

/// `log alpha` for moving from `current` to `proposed`.
pub fn log_acceptance(current: &TargetParts, proposed: &TargetParts, log_kernel_ratio: f64) -> f64 {
    (proposed.score() - current.score()) + log_kernel_ratio
}

/// Metropolis-Hastings decision for `log_alpha` and uniform draw `u`.
/// Non-finite `log_alpha` always rejects.
pub fn mh_accept(log_alpha: f64, u: f64) -> bool {
    if !log_alpha.is_finite() {
        return false;
    }
    log_alpha >= 0.0 || u < exp(log_alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub latent: Vec<f64>,
    /// `forward(latent)`.
    pub generated: Vec<f64>,
    pub parts: TargetParts,
    pub proposed: u64,
    pub accepted: u64,
    /// Proposals rejected because their target could not be evaluated.
    pub incidents: u64,
}

impl ChainState {
    /// Missing-coordinate block of the current generated point.
    pub fn completion(&self, sample: &MaskedSample) -> Vec<f64> {
        sample.missing.iter().map(|&i| self.generated[i]).collect()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// What happened at one proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub tag: KernelTag,
    pub accepted: bool,
    /// `log alpha`, or NaN when the proposal could not be evaluated.
    pub log_alpha: f64,
    /// Proposal-density term included in `log_alpha` (0 when not evaluated).
    pub log_kernel_ratio: f64,
    pub uniform: f64,
    /// Components at the proposal, when they could be evaluated.
    pub proposal_parts: Option<TargetParts>,
    /// Components at the state the proposal started from.
    pub current_parts: TargetParts,
}

/// A single PL-MCMC chain for one sample.
#[derive(Debug, Clone)]
pub struct Chain<'a> {
    eval: TargetEvaluator<'a>,
    config: &'a SamplerConfig,
    state: ChainState,
    proposal: Vec<f64>,
    proposal_y: Vec<f64>,
}

impl<'a> Chain<'a> {
    pub fn new(model: &'a FlowModel, sample: &'a MaskedSample, config: &'a SamplerConfig, latent: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let mut eval = TargetEvaluator::new(model, sample, config.aux)?;
        check_dim(model.dim(), latent.len())?;
        let mut generated = Vec::new();
        let parts = eval.evaluate(&latent, &mut generated)?;
        Ok(Self {
            eval,
            config,
            state: ChainState {
                latent,
                generated,
                parts,
                proposed: 0,
                accepted: 0,
                incidents: 0,
            },
            proposal: Vec::new(),
            proposal_y: Vec::new(),
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn completion(&self) -> Vec<f64> {
        self.state.completion(self.eval.sample)
    }

    /// One Metropolis-Hastings update (see [`plmcmc_step`]).
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StepOutcome {
        let tag = propose(&self.state.latent, self.config, rng, &mut self.proposal);
        let u: f64 = rng.random();
        self.finish_step(tag, u)
    }

    /// Evaluate an externally supplied proposal with uniform draw `u`.
    pub fn step_with(&mut self, proposal: &[f64], tag: KernelTag, u: f64) -> StepOutcome {
        self.proposal.clear();
        self.proposal.extend_from_slice(proposal);
        self.finish_step(tag, u)
    }

    fn finish_step(&mut self, tag: KernelTag, u: f64) -> StepOutcome {
        let current_parts = self.state.parts;
        self.state.proposed += 1;
        let evaluated = self.eval.evaluate(&self.proposal, &mut self.proposal_y);
        let (log_alpha, ratio, proposal_parts) = match evaluated {
            Ok(parts) => {
                let ratio = log_kernel_ratio(&self.state.latent, &self.proposal, tag, self.config);
                (log_acceptance(&current_parts, &parts, ratio), ratio, Some(parts))
            }
            Err(_) => (f64::NAN, 0.0, None),
        };
        if !log_alpha.is_finite() {
            self.state.incidents += 1;
        }
        let accepted = mh_accept(log_alpha, u);
        if accepted {
            core::mem::swap(&mut self.state.latent, &mut self.proposal);
            core::mem::swap(&mut self.state.generated, &mut self.proposal_y);
            self.state.parts = proposal_parts.expect("accepted proposals are evaluated");
            self.state.accepted += 1;
        }
        StepOutcome {
            tag,
            accepted,
            log_alpha,
            log_kernel_ratio: ratio,
            uniform: u,
            proposal_parts,
            current_parts,
        }
    }
}

/// One PL-MCMC update of `chain`: draw a proposal, then accept it with
/// probability `min(1, exp(log alpha))` using a single uniform draw.
pub fn plmcmc_step<R: Rng + ?Sized>(chain: &mut Chain<'_>, rng: &mut R) -> StepOutcome {
    chain.step(rng)
}

/// Starting latent state for `sample` under `policy`.
pub fn initial_latent<R: Rng + ?Sized>(
    model: &FlowModel,
    sample: &MaskedSample,
    policy: &InitPolicy,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match policy {
        InitPolicy::PriorSample { scale } => model.sample_prior(*scale, rng),
        InitPolicy::ObservedFill if sample.observed.is_empty() => model.sample_prior(1.0, rng),
        InitPolicy::ObservedFill => {
            let fill: Vec<f64> = sample
                .missing
                .iter()
                .map(|_| sample.observed[rng.random_range(0..sample.observed.len())])
                .collect();
            let x = sample.complete_with(&fill)?;
            Ok(model.inverse(&x)?.0)
        }
        InitPolicy::ProvidedLatent { latent } => {
            check_dim(model.dim(), latent.len())?;
            check_finite(latent, "initial latent")?;
            Ok(latent.clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Proposals made before this snapshot.
    pub proposals: usize,
    /// Proposals accepted before this snapshot.
    pub accepted: u64,
    /// Missing-coordinate values at this point.
    pub completion: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub index: usize,
    pub accepted: bool,
    /// `log q(y_O) + log p(y_M; x_O)` of the chain state after the step.
    pub log_target: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub checkpoints: Vec<Checkpoint>,
    pub records: Vec<ProposalRecord>,
    pub incidents: u64,
}

/// Run one chain from an explicit starting latent.
pub fn run_chain_from<R: Rng + ?Sized>(
    model: &FlowModel,
    sample: &MaskedSample,
    config: &SamplerConfig,
    latent: Vec<f64>,
    rng: &mut R,
) -> Result<(Vec<f64>, ChainTrace)> {
    if sample.is_fully_observed() {
        return Ok((Vec::new(), ChainTrace::default()));
    }
    let mut chain = Chain::new(model, sample, config, latent)?;
    let mut trace = ChainTrace::default();
    let snapshot = |chain: &Chain<'_>, n: usize| Checkpoint {
        proposals: n,
        accepted: chain.state.accepted,
        completion: chain.completion(),
    };
    trace.checkpoints.push(snapshot(&chain, 0));
    if config.record_proposals {
        trace.records.reserve(config.proposals);
    }
    for n in 1..=config.proposals {
        let out = chain.step(rng);
        if config.record_proposals {
            trace.records.push(ProposalRecord {
                index: n - 1,
                accepted: out.accepted,
                log_target: chain.state.parts.log_target(),
            });
        }
        let at_interval = config.checkpoint_interval > 0 && n % config.checkpoint_interval == 0;
        if at_interval || n == config.proposals {
            trace.checkpoints.push(snapshot(&chain, n));
        }
    }
    trace.incidents = chain.state.incidents;
    Ok((chain.completion(), trace))
}

/// Initialise per `config.init`, run `config.proposals` updates and return
/// the final missing-coordinate values with the trace.
pub fn run_chain<R: Rng + ?Sized>(
    model: &FlowModel,
    sample: &MaskedSample,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, ChainTrace)> {
    if sample.is_fully_observed() {
        return Ok((Vec::new(), ChainTrace::default()));
    }
    config.validate()?;
    let latent = initial_latent(model, sample, &config.init, rng)?;
    run_chain_from(model, sample, config, latent, rng)
}

/// Run `n_chains` independent chains; chain `c` draws from `key.chain(c)`.
pub fn run_chains<E: Executor>(
    model: &FlowModel,
    sample: &MaskedSample,
    config: &SamplerConfig,
    n_chains: usize,
    key: ChainKey,
    exec: &E,
) -> Result<Vec<(Vec<f64>, ChainTrace)>> {
    exec.map(n_chains, |c| {
        let mut rng: StreamRng = key.chain(c);
        run_chain(model, sample, config, &mut rng)
    })
    .into_iter()
    .collect()
}

/// Average of the final completions of `n_chains` independent chains.
pub fn conditional_mean<E: Executor>(
    model: &FlowModel,
    sample: &MaskedSample,
    config: &SamplerConfig,
    n_chains: usize,
    key: ChainKey,
    exec: &E,
) -> Result<Vec<f64>> {
    if n_chains == 0 {
        return Err(Error::usage("need at least one chain"));
    }
    let runs = run_chains(model, sample, config, n_chains, key, exec)?;
    let mut mean = vec![0.0; sample.missing.len()];
    for (completion, _) in &runs {
        mean.iter_mut().zip(completion).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n_chains as f64);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::flow::{FlowArch, PriorKind};
    use crate::rng::stream;

    fn identity(dim: usize) -> FlowModel {
        let arch = FlowArch {
            coupling_layers: 2,
            hidden_layers: 1,
            hidden_width: 4,
            prior: PriorKind::Normal,
        };
        FlowModel::zeros(dim, &arch, 0).unwrap()
    }

    #[test]
    fn mix_zero_always_perturbs() {
        let cfg = SamplerConfig {
            resample_prob: 0.0,
            ..Default::default()
        };
        let mut rng = stream(1, 0, 0, 0);
        let mut out = Vec::new();
        for _ in 0..1000 {
            assert_eq!(propose(&[0.0, 1.0], &cfg, &mut rng, &mut out), KernelTag::Perturb);
        }
    }

    #[test]
    fn kernel_ratio_examples() {
        let cfg = SamplerConfig {
            resample_scale: 1.0,
            ..Default::default()
        };
        assert_eq!(log_kernel_ratio(&[1.0, 2.0], &[5.0, -3.0], KernelTag::Perturb, &cfg), 0.0);
        assert_eq!(log_kernel_ratio(&[1.0, 0.0], &[0.0, -1.0], KernelTag::Resample, &cfg), 0.0);
        let r = log_kernel_ratio(&[1.0, 0.0, 0.0], &[1.0, 1.0, 1.0], KernelTag::Resample, &cfg);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn target_on_fully_missing_identity_is_the_prior() {
        let m = identity(2);
        let s = MaskedSample::from_observed(2, &[]).unwrap();
        let xi = [0.3, -1.1];
        let (lt, parts) = log_target(&m, &xi, &s, AuxiliaryDensity::ImproperUniform).unwrap();
        let expect = -0.5 * (0.09 + 1.21) - LN_2PI;
        assert!((lt - expect).abs() < 1e-14);
        assert_eq!(parts.logdet, 0.0);
    }

    #[test]
    fn projected_point_at_origin() {
        let m = identity(2);
        let s = MaskedSample::from_observed(2, &[(1, 0.0)]).unwrap();
        let (lt, _) = log_target(&m, &[0.0, 0.0], &s, AuxiliaryDensity::ImproperUniform).unwrap();
        assert!((lt + LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn identical_proposal_is_accepted() {
        let m = identity(2);
        let s = MaskedSample::from_observed(2, &[(1, 0.4)]).unwrap();
        let cfg = SamplerConfig::default();
        let mut chain = Chain::new(&m, &s, &cfg, vec![0.2, 0.9]).unwrap();
        let out = chain.step_with(&[0.2, 0.9], KernelTag::Perturb, 0.999_999);
        assert!(out.accepted);
        assert_eq!(out.log_alpha, 0.0);
    }

    #[test]
    fn fully_observed_sample_returns_empty_completion() {
        let m = identity(2);
        let s = MaskedSample::from_observed(2, &[(0, 1.0), (1, 2.0)]).unwrap();
        let (c, trace) = run_chain(&m, &s, &SamplerConfig::default(), &mut stream(0, 0, 0, 0)).unwrap();
        assert!(c.is_empty());
        assert!(trace.checkpoints.is_empty());
    }

    #[test]
    fn zero_proposals_return_the_initial_completion() {
        let m = identity(2);
        let s = MaskedSample::from_observed(2, &[(1, 0.5)]).unwrap();
        let cfg = SamplerConfig {
            proposals: 0,
            init: InitPolicy::ProvidedLatent { latent: vec![1.25, -3.0] },
            ..Default::default()
        };
        let (c, trace) = run_chain(&m, &s, &cfg, &mut stream(0, 0, 0, 0)).unwrap();
        assert_eq!(c, vec![1.25]);
        assert_eq!(trace.checkpoints.len(), 1);
    }

    #[test]
    fn single_chain_mean_is_its_completion() {
        let m = identity(2);
        let s = MaskedSample::from_observed(2, &[(1, 0.5)]).unwrap();
        let cfg = SamplerConfig {
            proposals: 50,
            ..Default::default()
        };
        let key = ChainKey::new(3, 0, 0);
        let mean = conditional_mean(&m, &s, &cfg, 1, key, &Sequential).unwrap();
        let (c, _) = run_chain(&m, &s, &cfg, &mut key.chain(0)).unwrap();
        assert_eq!(mean, c);
    }

    #[test]
    fn checkpoints_follow_the_interval() {
        let m = identity(2);
        let s = MaskedSample::from_observed(2, &[(0, 0.1)]).unwrap();
        let cfg = SamplerConfig {
            proposals: 25,
            checkpoint_interval: 10,
            record_proposals: true,
            ..Default::default()
        };
        let (_, trace) = run_chain(&m, &s, &cfg, &mut stream(0, 0, 0, 0)).unwrap();
        let at: Vec<usize> = trace.checkpoints.iter().map(|c| c.proposals).collect();
        assert_eq!(at, vec![0, 10, 20, 25]);
        assert_eq!(trace.records.len(), 25);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            SamplerConfig {
                perturb_scale: 0.0,
                ..Default::default()
            },
            SamplerConfig {
                resample_prob: 1.5,
                ..Default::default()
            },
            SamplerConfig {
                aux: AuxiliaryDensity::normal(-1.0),
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
