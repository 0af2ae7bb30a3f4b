//! In-memory datasets with explicit missingness masks, mask mechanisms,
//! whitening and attribute doubling.

use alloc::vec;
use alloc::vec::Vec;

use libm::{ceil, floor, round, sqrt};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::rng::{domain, stream};

/// Row-major table of values with a parallel missingness mask.
///
/// Missing cells hold `0.0` unless they have been imputed; their payload is
/// never read by statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    cols: usize,
    values: Vec<f64>,
    missing: Vec<bool>,
    /// Optional image shape `(height, width)` with `height * width == cols`.
    grid: Option<(usize, usize)>,
}

impl Dataset {
    /// Fully observed dataset.
    pub fn complete(cols: usize, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(cols, values, vec![false; n])
    }

    pub fn new(cols: usize, values: Vec<f64>, missing: Vec<bool>) -> Result<Self> {
        if cols == 0 || values.len() % cols != 0 {
            return Err(Error::usage("values do not form whole rows"));
        }
        check_dim(values.len(), missing.len())?;
        for (v, m) in values.iter().zip(&missing) {
            if !m && !v.is_finite() {
                return Err(Error::NonFinite("observed value"));
            }
        }
        Ok(Self {
            cols,
            values,
            missing,
            grid: None,
        })
    }

    pub fn with_grid(mut self, height: usize, width: usize) -> Result<Self> {
        check_dim(self.cols, height * width)?;
        self.grid = Some((height, width));
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing(&self) -> &[bool] {
        &self.missing
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_missing(&self, i: usize) -> &[bool] {
        &self.missing[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_refs(&self) -> Vec<&[f64]> {
        self.values.chunks_exact(self.cols).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn has_missing(&self, i: usize) -> bool {
        self.row_missing(i).iter().any(|&m| m)
    }

    /// Set every missing cell back to `0.0`.
    pub fn clear_missing(&mut self) {
        for (v, &m) in self.values.iter_mut().zip(&self.missing) {
            if m {
                *v = 0.0;
            }
        }
    }

    /// Observed values of column `j`.
    pub fn observed_column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows())
            .filter(move |&i| !self.missing[i * self.cols + j])
            .map(move |i| self.values[i * self.cols + j])
    }

    /// Per-column `(min, max)` over observed entries.
    pub fn observed_range(&self) -> Result<Vec<(f64, f64)>> {
        (0..self.cols)
            .map(|j| {
                self.observed_column(j)
                    .fold(None, |acc: Option<(f64, f64)>, v| {
                        Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
                    })
                    .ok_or_else(|| Error::usage(alloc::format!("column {j} has no observed values")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskMechanism {
    /// Each cell missing independently with probability `rate`.
    Independent { rate: f64 },
    /// One rectangle of area about `rate * h * w` missing per row.
    Patch { rate: f64 },
    /// Only one square of area about `(1 - rate) * h * w` observed per row.
    SquareObservation { rate: f64 },
}

impl MaskMechanism {
    pub fn rate(&self) -> f64 {
        match *self {
            MaskMechanism::Independent { rate }
            | MaskMechanism::Patch { rate }
            | MaskMechanism::SquareObservation { rate } => rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub mechanism: MaskMechanism,
    pub seed: u64,
}

/// Sample `[lo, hi]` uniformly.
fn uniform_int<R: Rng + ?Sized>(rng: &mut R, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

/// Width and height of the missing rectangle for a patch of `rate`.
fn patch_shape<R: Rng + ?Sized>(rate: f64, h: usize, w: usize, rng: &mut R) -> (usize, usize) {
    let area = rate * (h * w) as f64;
    let side = sqrt(area);
    let hi = (floor(2.0 * side) as usize).min(w).max(1);
    let lo = (ceil(0.5 * side) as usize).clamp(1, hi);
    let width = uniform_int(rng, lo, hi);
    let height = (round(area / width as f64) as usize).clamp(1, h);
    (width, height)
}

/// Side of the observed square for [`MaskMechanism::SquareObservation`].
pub fn observed_square_side(rate: f64, h: usize, w: usize) -> usize {
    (round(sqrt((1.0 - rate) * (h * w) as f64)) as usize).clamp(1, h.min(w))
}

/// Mask `table` according to `spec`. Newly masked cells are zeroed; cells
/// already missing stay missing. The mask of row `i` depends only on the
/// table shape, the mechanism, the seed and `i`.
pub fn apply_mask(table: &Dataset, spec: &MaskSpec) -> Result<Dataset> {
    let rate = spec.mechanism.rate();
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::usage("missingness rate must lie in [0, 1)"));
    }
    let grid = match spec.mechanism {
        MaskMechanism::Independent { .. } => None,
        _ => Some(
            table
                .grid
                .ok_or_else(|| Error::usage("grid masks need a table with an image shape"))?,
        ),
    };
    let mut out = table.clone();
    if rate == 0.0 {
        return Ok(out);
    }
    let cols = table.cols;
    for i in 0..table.rows() {
        let mut rng = stream(spec.seed, domain::MASK, i as u64, 0);
        let row = &mut out.missing[i * cols..(i + 1) * cols];
        match (spec.mechanism, grid) {
            (MaskMechanism::Independent { rate }, _) => {
                for m in row.iter_mut() {
                    if rng.random::<f64>() < rate {
                        *m = true;
                    }
                }
            }
            (MaskMechanism::Patch { rate }, Some((h, w))) => {
                let (pw, ph) = patch_shape(rate, h, w, &mut rng);
                let top = uniform_int(&mut rng, 0, h - ph);
                let left = uniform_int(&mut rng, 0, w - pw);
                for r in top..top + ph {
                    row[r * w + left..r * w + left + pw].fill(true);
                }
            }
            (MaskMechanism::SquareObservation { rate }, Some((h, w))) => {
                let side = observed_square_side(rate, h, w);
                let top = uniform_int(&mut rng, 0, h - side);
                let left = uniform_int(&mut rng, 0, w - side);
                for r in 0..h {
                    for c in 0..w {
                        let inside = (top..top + side).contains(&r) && (left..left + side).contains(&c);
                        if !inside {
                            row[r * w + c] = true;
                        }
                    }
                }
            }
            _ => unreachable!("grid checked above"),
        }
    }
    out.clear_missing();
    Ok(out)
}

/// Per-attribute observed mean and standard deviation (population form).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteningStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl WhiteningStats {
    pub fn from_observed(data: &Dataset) -> Result<Self> {
        let mut mean = Vec::with_capacity(data.cols);
        let mut std = Vec::with_capacity(data.cols);
        for j in 0..data.cols {
            let (mut n, mut sum) = (0usize, 0.0);
            for v in data.observed_column(j) {
                n += 1;
                sum += v;
            }
            if n == 0 {
                return Err(Error::ConstantColumn { column: j });
            }
            let mu = sum / n as f64;
            let var = data.observed_column(j).map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let s = sqrt(var);
            if s.is_nan() || s <= 0.0 {
                return Err(Error::ConstantColumn { column: j });
            }
            mean.push(mu);
            std.push(s);
        }
        Ok(Self { mean, std })
    }

    pub fn whiten_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn unwhiten_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }
}

/// Standardize observed entries with observed-entry statistics. Missing
/// cells are left at zero (the whitened mean).
pub fn whiten(data: &Dataset) -> Result<(Dataset, WhiteningStats)> {
    let stats = WhiteningStats::from_observed(data)?;
    let mut out = data.clone();
    for i in 0..out.rows() {
        stats.whiten_row(out.row_mut(i));
    }
    out.clear_missing();
    Ok((out, stats))
}

/// Map every entry (observed and imputed) back to the original scale.
pub fn unwhiten(data: &Dataset, stats: &WhiteningStats) -> Result<Dataset> {
    check_dim(data.cols, stats.mean.len())?;
    let mut out = data.clone();
    for i in 0..out.rows() {
        stats.unwhiten_row(out.row_mut(i));
    }
    check_finite(&out.values, "unwhitened values")?;
    Ok(out)
}

/// Append a copy of every column (values and mask) so an odd width becomes
/// even. The image shape, if any, is dropped.
pub fn double_attributes(data: &Dataset) -> Dataset {
    let cols = data.cols;
    let mut values = Vec::with_capacity(2 * data.values.len());
    let mut missing = Vec::with_capacity(2 * data.values.len());
    for i in 0..data.rows() {
        for _ in 0..2 {
            values.extend_from_slice(data.row(i));
            missing.extend_from_slice(data.row_missing(i));
        }
    }
    Dataset {
        cols: 2 * cols,
        values,
        missing,
        grid: None,
    }
}

/// Repeat every row (with its mask) `k` times, keeping row blocks in order.
pub fn duplicate_dataset(data: &Dataset, k: usize) -> Result<Dataset> {
    if k == 0 {
        return Err(Error::usage("duplication factor must be positive"));
    }
    let mut out = data.clone();
    out.values = data.values.repeat(k);
    out.missing = data.missing.repeat(k);
    Ok(out)
}

/// `rows` draws from a zero-mean, unit-variance normal whose coordinates
/// all have pairwise correlation `rho`.
pub fn correlated_gaussian(rows: usize, cols: usize, rho: f64, seed: u64) -> Result<Dataset> {
    if cols == 0 || !(0.0..1.0).contains(&rho) {
        return Err(Error::usage("need at least one column and 0 <= rho < 1"));
    }
    let (shared, own) = (sqrt(rho), sqrt(1.0 - rho));
    let mut values = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let mut rng = stream(seed, domain::INIT, i as u64, 1);
        let common: f64 = StandardNormal.sample(&mut rng);
        for _ in 0..cols {
            let e: f64 = StandardNormal.sample(&mut rng);
            values.push(shared * common + own * e);
        }
    }
    Dataset::complete(cols, values)
}
