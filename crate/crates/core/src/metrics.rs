//! Imputation scores and acceptance-rate summaries.
//!
//! Matrices are row-major with `cols` columns. Only cells flagged in
//! `missing` are scored; rows without missing cells are skipped.

use alloc::vec::Vec;

use libm::sqrt;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::sampler::ChainTrace;

fn check_shapes(imputed: &[f64], truth: &[f64], missing: &[bool], cols: usize) -> Result<()> {
    check_dim(truth.len(), imputed.len())?;
    check_dim(truth.len(), missing.len())?;
    if cols == 0 || truth.len() % cols != 0 {
        return Err(Error::usage("values do not form whole rows"));
    }
    Ok(())
}

/// Mean over rows of `f(per-row mean of weighted squared errors)`.
fn per_row_mean(
    imputed: &[f64],
    truth: &[f64],
    missing: &[bool],
    cols: usize,
    weight: impl Fn(usize) -> f64,
    finish: impl Fn(f64) -> f64,
) -> Result<f64> {
    check_shapes(imputed, truth, missing, cols)?;
    let mut total = 0.0;
    let mut rows = 0usize;
    for ((x, t), m) in imputed.chunks_exact(cols).zip(truth.chunks_exact(cols)).zip(missing.chunks_exact(cols)) {
        let mut ss = 0.0;
        let mut n = 0usize;
        for j in (0..cols).filter(|&j| m[j]) {
            let e = (x[j] - t[j]) * weight(j);
            ss += e * e;
            n += 1;
        }
        if n > 0 {
            total += finish(ss / n as f64);
            rows += 1;
        }
    }
    if rows == 0 {
        return Err(Error::usage("no missing entries to score"));
    }
    Ok(total / rows as f64)
}

/// Mean over rows of the per-row RMSE across that row's missing cells.
pub fn reconstruction_rmse(imputed: &[f64], truth: &[f64], missing: &[bool], cols: usize) -> Result<f64> {
    per_row_mean(imputed, truth, missing, cols, |_| 1.0, sqrt)
}

/// Mean over rows of the per-row mean squared error, each column scaled by
/// its ground-truth standard deviation `sigmas[j]`.
pub fn nmse(imputed: &[f64], truth: &[f64], missing: &[bool], cols: usize, sigmas: &[f64]) -> Result<f64> {
    check_dim(cols, sigmas.len())?;
    if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::usage("ground-truth standard deviations must be positive"));
    }
    per_row_mean(imputed, truth, missing, cols, |j| 1.0 / sigmas[j], |v| v)
}

/// Population standard deviation of each column of a complete matrix.
pub fn column_std(values: &[f64], cols: usize) -> Result<Vec<f64>> {
    if cols == 0 || values.is_empty() || values.len() % cols != 0 {
        return Err(Error::usage("values do not form whole rows"));
    }
    let n = (values.len() / cols) as f64;
    Ok((0..cols)
        .map(|j| {
            let mean = values.iter().skip(j).step_by(cols).sum::<f64>() / n;
            let var = values.iter().skip(j).step_by(cols).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            sqrt(var)
        })
        .collect())
}

/// Copy of `values` with every missing cell replaced by its column's
/// observed mean.
pub fn mean_fill(values: &[f64], missing: &[bool], cols: usize) -> Result<Vec<f64>> {
    check_shapes(values, values, missing, cols)?;
    let mut sums = alloc::vec![(0.0, 0usize); cols];
    for (k, (v, &m)) in values.iter().zip(missing).enumerate() {
        if !m {
            sums[k % cols].0 += v;
            sums[k % cols].1 += 1;
        }
    }
    if let Some(column) = sums.iter().position(|&(_, n)| n == 0) {
        return Err(Error::usage(alloc::format!("column {column} has no observed values")));
    }
    Ok(values
        .iter()
        .zip(missing)
        .enumerate()
        .map(|(k, (v, &m))| if m { sums[k % cols].0 / sums[k % cols].1 as f64 } else { *v })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRow {
    /// Proposals made up to this checkpoint.
    pub proposals: usize,
    /// Mean over chains of the acceptance rate since the previous checkpoint.
    pub mean: f64,
    pub std: f64,
}

/// Per-checkpoint acceptance rate across chains. All traces must share the
/// same checkpoint positions.
pub fn acceptance_summary(traces: &[ChainTrace]) -> Result<Vec<AcceptanceRow>> {
    let first = traces.first().ok_or_else(|| Error::usage("no traces"))?;
    if first.checkpoints.len() < 2 {
        return Err(Error::usage("trace has no proposals"));
    }
    let positions: Vec<usize> = first.checkpoints.iter().map(|c| c.proposals).collect();
    for t in traces {
        if t.checkpoints.len() != positions.len() || t.checkpoints.iter().zip(&positions).any(|(c, p)| c.proposals != *p) {
            return Err(Error::usage("traces have different checkpoints"));
        }
    }
    let n = traces.len() as f64;
    Ok((1..positions.len())
        .map(|k| {
            let rates: Vec<f64> = traces
                .iter()
                .map(|t| {
                    let (a, b) = (&t.checkpoints[k - 1], &t.checkpoints[k]);
                    (b.accepted - a.accepted) as f64 / (b.proposals - a.proposals) as f64
                })
                .collect();
            let mean = rates.iter().sum::<f64>() / n;
            let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
            AcceptanceRow {
                proposals: positions[k],
                mean,
                std: sqrt(var),
            }
        })
        .collect())
}
