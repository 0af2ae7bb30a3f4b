//! Monte Carlo EM training from incomplete data.
//!
//! Epoch schedule for `warmup` warm-up epochs and resample interval `k`:
//!
//! * `epoch < warmup`: every missing entry is redrawn from `N(0, 1)`;
//! * `epoch >= warmup` and `(epoch - warmup) % k == 0`: missing entries are
//!   re-imputed by one PL-MCMC chain per incomplete row under the current
//!   model;
//! * otherwise the previous imputation is kept;
//!
//! followed by one training epoch on the completed rows.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::exec::Executor;
use crate::flow::FlowModel;
use crate::metrics::nmse;
use crate::optim::{OptimizerKind, OptimizerState};
use crate::rng::{domain, stream, ChainKey};
use crate::sampler::{run_chain, MaskedSample, SamplerConfig};
use crate::train::train_epoch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McemConfig {
    pub total_epochs: usize,
    pub resample_interval: usize,
    pub warmup_epochs: usize,
    pub sampler: SamplerConfig,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub clamp: bool,
    pub clip_norm: Option<f64>,
    /// `(first_epoch, resample_scale)` pairs; the last entry whose epoch
    /// has been reached overrides the sampler's resample scale.
    pub resample_scale_schedule: Vec<(usize, f64)>,
}

impl Default for McemConfig {
    fn default() -> Self {
        Self {
            total_epochs: 1000,
            resample_interval: 50,
            warmup_epochs: 50,
            sampler: SamplerConfig::default(),
            optimizer: OptimizerKind::adamax_default(),
            batch_size: 100,
            clamp: true,
            clip_norm: None,
            resample_scale_schedule: Vec::new(),
        }
    }
}

impl McemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resample_interval == 0 {
            return Err(Error::usage("resample interval must be positive"));
        }
        if self.warmup_epochs > self.total_epochs {
            return Err(Error::usage("warm-up cannot exceed the total epoch count"));
        }
        if self.batch_size == 0 {
            return Err(Error::usage("batch size must be positive"));
        }
        if self.resample_scale_schedule.iter().any(|&(_, s)| !(s > 0.0 && s.is_finite())) {
            return Err(Error::usage("scheduled resample scales must be positive"));
        }
        self.optimizer.validate()?;
        self.sampler.validate()
    }

    /// Whether missing entries are re-imputed by PL-MCMC before `epoch`.
    pub fn is_resample_epoch(&self, epoch: usize) -> bool {
        epoch >= self.warmup_epochs && (epoch - self.warmup_epochs) % self.resample_interval == 0
    }

    /// Sampler settings in force at `epoch`.
    pub fn sampler_at(&self, epoch: usize) -> SamplerConfig {
        let mut cfg = self.sampler.clone();
        if let Some(&(_, s)) = self.resample_scale_schedule.iter().filter(|(e, _)| *e <= epoch).max_by_key(|(e, _)| *e) {
            cfg.resample_scale = s;
        }
        cfg
    }
}

/// Current completion of an incomplete training set.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedDataset {
    pub data: Dataset,
    /// Per-attribute observed `(min, max)`.
    pub range: Vec<(f64, f64)>,
}

impl ImputedDataset {
    pub fn new(data: Dataset) -> Result<Self> {
        let range = data.observed_range()?;
        Ok(Self { data, range })
    }

    pub fn sample(&self, row: usize) -> Result<MaskedSample> {
        MaskedSample::new(self.data.row(row), self.data.row_missing(row))
    }

    fn write_row(&mut self, row: usize, completion: &[f64], clamp: bool) {
        let cols = self.data.cols();
        let missing: Vec<usize> = (0..cols).filter(|&j| self.data.row_missing(row)[j]).collect();
        let values = self.data.row_mut(row);
        for (&j, &v) in missing.iter().zip(completion) {
            values[j] = if clamp {
                v.clamp(self.range[j].0, self.range[j].1)
            } else {
                v
            };
        }
    }
}

/// Redraw every missing entry from a standard normal.
pub fn warmup_fill<R: Rng + ?Sized>(data: &mut ImputedDataset, rng: &mut R) {
    let cols = data.data.cols();
    for i in 0..data.data.rows() {
        for j in 0..cols {
            if data.data.row_missing(i)[j] {
                data.data.row_mut(i)[j] = StandardNormal.sample(rng);
            }
        }
    }
}

/// Re-impute every incomplete row with one chain each. Row `i` uses chain
/// stream `ChainKey::new(seed, i, round).chain(0)`. Rows whose chain fails
/// keep their previous values; the number of such rows is returned.
pub fn impute_dataset<E: Executor>(
    model: &FlowModel,
    data: &mut ImputedDataset,
    config: &SamplerConfig,
    clamp: bool,
    seed: u64,
    round: u64,
    exec: &E,
) -> Result<usize> {
    check_dim(model.dim(), data.data.cols())?;
    config.validate()?;
    let rows: Vec<usize> = (0..data.data.rows()).filter(|&i| data.data.has_missing(i)).collect();
    let snapshot = &*data;
    let results = exec.map(rows.len(), |k| {
        let i = rows[k];
        let sample = snapshot.sample(i)?;
        let mut rng = ChainKey::new(seed, i as u64, round).chain(0);
        run_chain(model, &sample, config, &mut rng).map(|(c, _)| c)
    });
    let mut failed = 0;
    for (&i, res) in rows.iter().zip(results) {
        match res {
            Ok(completion) => data.write_row(i, &completion, clamp),
            Err(e) => {
                log::warn!("imputation of row {i} failed: {e}");
                failed += 1;
            }
        }
    }
    Ok(failed)
}

/// Imputations of one dataset from several independent chains per row.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChainImputation {
    /// Final state of chain 0 for every incomplete row.
    pub individual: Dataset,
    /// Mean of the final states over all chains.
    pub average: Dataset,
}

/// Impute every incomplete row of `data` with `n_chains` chains. Chain `c`
/// of row `i` draws from `ChainKey::new(seed, i, round).chain(c)`, so chain
/// 0 reproduces [`impute_dataset`] for the same round. With `range` set,
/// each chain's output is clamped before averaging.
#[allow(clippy::too_many_arguments)]
pub fn multi_chain_impute<E: Executor>(
    model: &FlowModel,
    data: &Dataset,
    config: &SamplerConfig,
    n_chains: usize,
    range: Option<&[(f64, f64)]>,
    seed: u64,
    round: u64,
    exec: &E,
) -> Result<MultiChainImputation> {
    check_dim(model.dim(), data.cols())?;
    if n_chains == 0 {
        return Err(Error::usage("need at least one chain"));
    }
    if let Some(r) = range {
        check_dim(data.cols(), r.len())?;
    }
    config.validate()?;
    let rows: Vec<usize> = (0..data.rows()).filter(|&i| data.has_missing(i)).collect();
    let results = exec.map(rows.len() * n_chains, |job| {
        let (i, c) = (rows[job / n_chains], job % n_chains);
        let sample = MaskedSample::new(data.row(i), data.row_missing(i))?;
        let mut rng = ChainKey::new(seed, i as u64, round).chain(c);
        let (mut completion, _) = run_chain(model, &sample, config, &mut rng)?;
        if let Some(r) = range {
            for (v, &j) in completion.iter_mut().zip(sample.missing_indices()) {
                *v = v.clamp(r[j].0, r[j].1);
            }
        }
        Ok(completion)
    });
    let mut individual = data.clone();
    let mut average = data.clone();
    let mut results = results.into_iter();
    for &i in &rows {
        let missing: Vec<usize> = (0..data.cols()).filter(|&j| data.row_missing(i)[j]).collect();
        let mut sum = alloc::vec![0.0; missing.len()];
        for c in 0..n_chains {
            let completion: Vec<f64> = results.next().expect("one result per job")?;
            if c == 0 {
                for (&j, v) in missing.iter().zip(&completion) {
                    individual.row_mut(i)[j] = *v;
                }
            }
            sum.iter_mut().zip(&completion).for_each(|(s, v)| *s += v);
        }
        for (&j, s) in missing.iter().zip(&sum) {
            average.row_mut(i)[j] = s / n_chains as f64;
        }
    }
    Ok(MultiChainImputation { individual, average })
}

/// Ground truth for scoring imputations during training.
#[derive(Debug, Clone, PartialEq)]
pub struct Scoring {
    /// Complete values in the same representation as the training data.
    pub truth: Vec<f64>,
    /// Ground-truth per-attribute standard deviations in that representation.
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_nll: f64,
    /// Imputation NMSE, recorded at resample epochs when truth is known.
    pub nmse: Option<f64>,
}

/// Hooks called while training. All methods default to doing nothing.
pub trait McemObserver {
    fn on_epoch(&mut self, _record: &EpochRecord) {}
    /// Called after each PL-MCMC re-imputation with the model that produced it.
    fn on_resample(&mut self, _epoch: usize, _model: &FlowModel, _data: &ImputedDataset) {}
}

impl McemObserver for () {}

#[derive(Debug, Clone)]
pub struct McemOutcome {
    pub model: FlowModel,
    pub history: Vec<EpochRecord>,
    pub imputed: ImputedDataset,
    /// Set when training stopped early; `model` then holds the last
    /// parameters that were finite.
    pub aborted: Option<Error>,
}

/// Train `model` on the incomplete `data` by Monte Carlo EM.
pub fn mcem_train<E: Executor, O: McemObserver + ?Sized>(
    model: FlowModel,
    data: &Dataset,
    config: &McemConfig,
    seed: u64,
    scoring: Option<&Scoring>,
    exec: &E,
    observer: &mut O,
) -> Result<McemOutcome> {
    config.validate()?;
    check_dim(model.dim(), data.cols())?;
    if let Some(s) = scoring {
        check_dim(data.values().len(), s.truth.len())?;
        check_dim(data.cols(), s.sigmas.len())?;
    }
    let mut model = model;
    let mut imputed = ImputedDataset::new(data.clone())?;
    let mut history = Vec::with_capacity(config.total_epochs);
    let mut optimizer = OptimizerState::new(config.optimizer, &model)?;
    let mut aborted = None;
    for epoch in 0..config.total_epochs {
        let mut score = None;
        if epoch < config.warmup_epochs {
            warmup_fill(&mut imputed, &mut stream(seed, domain::WARMUP, 0, epoch as u64));
        } else if config.is_resample_epoch(epoch) {
            let sampler = config.sampler_at(epoch);
            impute_dataset(&model, &mut imputed, &sampler, config.clamp, seed, epoch as u64, exec)?;
            if let Some(s) = scoring {
                score = Some(nmse(
                    imputed.data.values(),
                    &s.truth,
                    imputed.data.missing(),
                    data.cols(),
                    &s.sigmas,
                )?);
            }
            observer.on_resample(epoch, &model, &imputed);
        }
        let rows = imputed.data.row_refs();
        let mut rng = stream(seed, domain::TRAIN, 0, epoch as u64);
        match train_epoch(
            &mut model,
            &rows,
            config.batch_size,
            config.clip_norm,
            &mut optimizer,
            &mut rng,
            exec,
        ) {
            Ok(mean_nll) => {
                let record = EpochRecord {
                    epoch,
                    mean_nll,
                    nmse: score,
                };
                observer.on_epoch(&record);
                history.push(record);
            }
            Err(e @ (Error::NonFiniteGradient { .. } | Error::NonFiniteParameter { .. } | Error::NonFinite(_))) => {
                log::error!("training aborted at epoch {epoch}: {e}");
                aborted = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(McemOutcome {
        model,
        history,
        imputed,
        aborted,
    })
}
