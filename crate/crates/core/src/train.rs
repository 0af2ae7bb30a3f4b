//! Mini-batch maximum-likelihood training on complete data.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::exec::Executor;
use crate::flow::FlowModel;
use crate::grad::nll_and_grad_with;
use crate::optim::{clip_global_norm, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Optional cap on the global gradient norm.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 100,
            clip_norm: None,
        }
    }
}

/// One pass over `rows` in a fresh random order. Returns the mean of the
/// per-row losses seen during the pass (each evaluated just before the
/// update it contributed to).
pub fn train_epoch<R, E>(
    model: &mut FlowModel,
    rows: &[&[f64]],
    batch_size: usize,
    clip_norm: Option<f64>,
    optimizer: &mut OptimizerState,
    rng: &mut R,
    exec: &E,
) -> Result<f64>
where
    R: Rng + ?Sized,
    E: Executor,
{
    if rows.is_empty() {
        return Err(Error::usage("training set is empty"));
    }
    if batch_size == 0 {
        return Err(Error::usage("batch size must be positive"));
    }
    for row in rows {
        check_dim(model.dim(), row.len())?;
    }
    let batch_size = if batch_size > rows.len() {
        log::warn!(
            "batch size {} exceeds {} training rows; using {}",
            batch_size,
            rows.len(),
            rows.len()
        );
        rows.len()
    } else {
        batch_size
    };
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(rng);
    let mut batch: Vec<&[f64]> = Vec::with_capacity(batch_size);
    let mut total = 0.0;
    for idx in order.chunks(batch_size) {
        batch.clear();
        batch.extend(idx.iter().map(|&i| rows[i]));
        let (nll, mut grads) = nll_and_grad_with(model, &batch, exec)?;
        if let Some(max) = clip_norm {
            clip_global_norm(&mut grads, max);
        }
        optimizer.step(model, &grads)?;
        total += nll * batch.len() as f64;
    }
    Ok(total / rows.len() as f64)
}

/// Run `config.epochs` epochs and return the per-epoch mean loss.
pub fn train<R, E>(
    model: &mut FlowModel,
    rows: &[&[f64]],
    config: &TrainConfig,
    optimizer: &mut OptimizerState,
    rng: &mut R,
    exec: &E,
) -> Result<Vec<f64>>
where
    R: Rng + ?Sized,
    E: Executor,
{
    (0..config.epochs)
        .map(|_| train_epoch(model, rows, config.batch_size, config.clip_norm, optimizer, rng, exec))
        .collect()
}
