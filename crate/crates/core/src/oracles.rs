//! Reference distributions computed without the sampler.
//!
//! * [`gaussian_conditional`]: closed-form conditioning of `N(b, A A^T)`,
//!   the data distribution of an affine flow `x = A xi + b` with a standard
//!   normal prior.
//! * [`AffineFlowSpec`]: random affine flows expressed both as a
//!   [`FlowModel`] and as the dense pair `(A, b)` obtained by multiplying out
//!   the layer matrices.
//! * [`grid_conditional`]: brute-force normalised conditional on a grid for
//!   one or two missing coordinates. Densities come from [`reference_log_prob`],
//!   a direct re-evaluation of the flow that shares no code with
//!   [`FlowModel::log_prob`].
//! * [`kl_decomposition_check`] and [`imputation_kl_improvement_check`] on
//!   discrete joint tables.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs, log, log1p, sqrt};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::flow::{CouplingLayer, FlowModel, Half, Mlp, PriorKind};
use crate::sampler::MaskedSample;

/// Conditional mean and covariance of the missing block.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianConditional {
    pub missing: Vec<usize>,
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianConditional {
    pub fn variance(&self) -> Vec<f64> {
        self.cov.diagonal().iter().copied().collect()
    }
}

/// Condition `N(b, A A^T)` on `observed` `(index, value)` pairs.
pub fn gaussian_conditional(a: &DMatrix<f64>, b: &[f64], observed: &[(usize, f64)]) -> Result<GaussianConditional> {
    let dim = b.len();
    check_dim(dim, a.nrows())?;
    check_dim(dim, a.ncols())?;
    let sv = a.singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    if smin.is_nan() || smin <= 1e-12 * smax {
        return Err(Error::Singular);
    }
    let mut is_obs = vec![false; dim];
    for &(i, _) in observed {
        if i >= dim || is_obs[i] {
            return Err(Error::usage("observed indices must be distinct and in range"));
        }
        is_obs[i] = true;
    }
    let missing: Vec<usize> = (0..dim).filter(|&i| !is_obs[i]).collect();
    let obs_idx: Vec<usize> = observed.iter().map(|&(i, _)| i).collect();
    let sigma = a * a.transpose();
    let block = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |r, c| sigma[(rows[r], cols[c])]);
    let s_mm = block(&missing, &missing);
    if obs_idx.is_empty() {
        return Ok(GaussianConditional {
            mean: missing.iter().map(|&i| b[i]).collect(),
            missing,
            cov: s_mm,
        });
    }
    let s_mo = block(&missing, &obs_idx);
    let s_oo = block(&obs_idx, &obs_idx);
    let chol = s_oo.cholesky().ok_or(Error::Singular)?;
    let resid = DVector::from_iterator(obs_idx.len(), observed.iter().map(|&(i, v)| v - b[i]));
    let mean_shift = &s_mo * chol.solve(&resid);
    let cov = &s_mm - &s_mo * chol.solve(&s_mo.transpose());
    Ok(GaussianConditional {
        mean: missing.iter().zip(mean_shift.iter()).map(|(&i, d)| b[i] + d).collect(),
        missing,
        cov,
    })
}

/// An additive-coupling flow whose coupling networks are linear maps.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFlowSpec {
    pub in_second: Vec<bool>,
    /// Per coupling: row-major `half x half` matrix and shift vector.
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
    pub log_scale: Vec<f64>,
}

impl AffineFlowSpec {
    /// Random spec: balanced random partition, coupling entries drawn with
    /// standard deviation `coupling_std / sqrt(dim / 2)`, log-scales uniform
    /// in `[-0.5, 0.5]` and shifts with standard deviation 0.5.
    pub fn random<R: Rng + ?Sized>(dim: usize, layers: usize, coupling_std: f64, rng: &mut R) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 {
            return Err(Error::usage("dimension must be even and positive"));
        }
        let half = dim / 2;
        let mut idx: Vec<usize> = (0..dim).collect();
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), rng);
        let mut in_second = vec![false; dim];
        for &i in &idx[..half] {
            in_second[i] = true;
        }
        let w = coupling_std / sqrt(half as f64);
        let mut normal = |s: f64| -> f64 {
            let n: f64 = StandardNormal.sample(rng);
            s * n
        };
        let layers = (0..layers)
            .map(|_| {
                let m: Vec<f64> = (0..half * half).map(|_| normal(w)).collect();
                let c: Vec<f64> = (0..half).map(|_| normal(0.5)).collect();
                (m, c)
            })
            .collect();
        let u = Uniform::new_inclusive(-0.5, 0.5).expect("finite bounds");
        let log_scale = (0..dim).map(|_| u.sample(rng)).collect();
        Ok(Self {
            in_second,
            layers,
            log_scale,
        })
    }

    fn halves(&self, k: usize) -> (Vec<usize>, Vec<usize>) {
        let first: Vec<usize> = (0..self.in_second.len()).filter(|&i| !self.in_second[i]).collect();
        let second: Vec<usize> = (0..self.in_second.len()).filter(|&i| self.in_second[i]).collect();
        if k % 2 == 0 {
            (first, second)
        } else {
            (second, first)
        }
    }

    pub fn to_flow(&self) -> Result<FlowModel> {
        let half = self.in_second.len() / 2;
        let couplings = self
            .layers
            .iter()
            .enumerate()
            .map(|(k, (m, c))| {
                Ok(CouplingLayer {
                    shifts: if k % 2 == 0 { Half::Second } else { Half::First },
                    net: Mlp::from_linear_map(half, half, m, c)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FlowModel::from_parts(PriorKind::Normal, self.in_second.clone(), couplings, self.log_scale.clone())
    }

    /// `(A, b)` with `forward(xi) = A xi + b`, built by multiplying dense
    /// layer matrices.
    pub fn affine_map(&self) -> (DMatrix<f64>, DVector<f64>) {
        let dim = self.in_second.len();
        let half = dim / 2;
        let mut a = DMatrix::from_diagonal(&DVector::from_iterator(dim, self.log_scale.iter().map(|s| exp(*s))));
        let mut b = DVector::zeros(dim);
        for k in (0..self.layers.len()).rev() {
            let (src, dst) = self.halves(k);
            let (m, c) = &self.layers[k];
            // z_dst -= M z_src + c
            let mut step = DMatrix::<f64>::identity(dim, dim);
            let mut shift = DVector::<f64>::zeros(dim);
            for r in 0..half {
                for col in 0..half {
                    step[(dst[r], src[col])] -= m[r * half + col];
                }
                shift[dst[r]] = c[r];
            }
            a = &step * a;
            b = &step * b - shift;
        }
        (a, b)
    }
}

/// `log p(x)` re-derived directly from the flow's parameters.
pub fn reference_log_prob(model: &FlowModel, x: &[f64]) -> Result<f64> {
    check_dim(model.dim(), x.len())?;
    check_finite(x, "grid point")?;
    let part = model.partition();
    let first: Vec<usize> = (0..x.len()).filter(|&i| !part[i]).collect();
    let second: Vec<usize> = (0..x.len()).filter(|&i| part[i]).collect();
    let mut z = x.to_vec();
    for layer in model.couplings() {
        let (src, dst) = match layer.shifts {
            Half::Second => (&first, &second),
            Half::First => (&second, &first),
        };
        let mut h: Vec<f64> = src.iter().map(|&i| z[i]).collect();
        let n = layer.net.layers.len();
        for (l, dense) in layer.net.layers.iter().enumerate() {
            let mut next = dense.bias.clone();
            for (r, out) in next.iter_mut().enumerate() {
                for (c, v) in h.iter().enumerate() {
                    *out += dense.weights[r * dense.inputs + c] * v;
                }
                if l + 1 < n && *out < 0.0 {
                    *out = 0.0;
                }
            }
            h = next;
        }
        for (&i, s) in dst.iter().zip(&h) {
            z[i] += s;
        }
    }
    let mut lp = 0.0;
    for (v, s) in z.iter().zip(model.log_scale()) {
        let t = v / exp(*s);
        lp -= s;
        lp += match model.prior() {
            PriorKind::Normal => -0.5 * t * t - 0.5 * log(2.0 * core::f64::consts::PI),
            PriorKind::Logistic => -fabs(t) - 2.0 * log1p(exp(-fabs(t))),
        };
    }
    Ok(lp)
}

/// Grid over each missing coordinate: `points` evenly spaced values on
/// `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    /// +/- 8 prior standard deviations, 2001 points.
    pub fn for_prior(prior: PriorKind) -> Self {
        let w = 8.0 * prior.std_dev();
        Self {
            lo: -w,
            hi: w,
            points: 2001,
        }
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn value(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step()
    }
}

/// Normalised probability mass on the grid. For two missing coordinates the
/// first one varies slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConditional {
    pub missing: Vec<usize>,
    pub grid: GridSpec,
    pub mass: Vec<f64>,
}

impl GridConditional {
    /// Marginal mass of missing coordinate `k` on the grid.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        let n = self.grid.points;
        if self.missing.len() == 1 {
            return self.mass.clone();
        }
        let mut out = vec![0.0; n];
        for (flat, m) in self.mass.iter().enumerate() {
            let (i, j) = (flat / n, flat % n);
            out[if k == 0 { i } else { j }] += m;
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.missing.len())
            .map(|k| {
                self.marginal(k)
                    .iter()
                    .enumerate()
                    .map(|(i, m)| m * self.grid.value(i))
                    .sum()
            })
            .collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        let mean = self.mean();
        (0..self.missing.len())
            .map(|k| {
                self.marginal(k)
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        let d = self.grid.value(i) - mean[k];
                        m * d * d
                    })
                    .sum()
            })
            .collect()
    }

    /// Marginal of coordinate `k` merged into `bins` equal-width bins over
    /// the grid range.
    pub fn binned_marginal(&self, k: usize, bins: usize) -> Vec<f64> {
        let mut out = vec![0.0; bins];
        for (i, m) in self.marginal(k).iter().enumerate() {
            out[bin_index(&self.grid, bins, self.grid.value(i))] += m;
        }
        out
    }
}

fn bin_index(grid: &GridSpec, bins: usize, v: f64) -> usize {
    // grid points are cell centres, so the binned range extends half a step
    let lo = grid.lo - 0.5 * grid.step();
    let width = (grid.hi - grid.lo + grid.step()) / bins as f64;
    let b = (v - lo) / width;
    if b <= 0.0 {
        0
    } else {
        (b as usize).min(bins - 1)
    }
}

/// Normalised histogram of `values` on the same bins as
/// [`GridConditional::binned_marginal`]. Values outside the grid land in
/// the end bins.
pub fn histogram(grid: &GridSpec, bins: usize, values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; bins];
    for &v in values {
        out[bin_index(grid, bins, v)] += 1.0;
    }
    let n = values.len() as f64;
    out.iter_mut().for_each(|c| *c /= n);
    out
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| fabs(a - b)).sum::<f64>()
}

/// Conditional of the missing coordinates (one or two) of `sample`
/// evaluated on `grid` and normalised to unit mass.
pub fn grid_conditional(model: &FlowModel, sample: &MaskedSample, grid: &GridSpec) -> Result<GridConditional> {
    check_dim(model.dim(), sample.dim())?;
    let missing = sample.missing_indices().to_vec();
    if missing.is_empty() || missing.len() > 2 {
        return Err(Error::usage("grid oracle supports one or two missing coordinates"));
    }
    if grid.points < 2 || grid.hi.is_nan() || grid.lo.is_nan() || grid.hi <= grid.lo {
        return Err(Error::usage("grid needs at least two points on a non-empty range"));
    }
    let n = grid.points;
    let cells = if missing.len() == 1 { n } else { n * n };
    let mut x = sample.complete_with(&vec![0.0; missing.len()])?;
    let mut logp = Vec::with_capacity(cells);
    for flat in 0..cells {
        if missing.len() == 1 {
            x[missing[0]] = grid.value(flat);
        } else {
            x[missing[0]] = grid.value(flat / n);
            x[missing[1]] = grid.value(flat % n);
        }
        logp.push(reference_log_prob(model, &x)?);
    }
    let top = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut mass: Vec<f64> = logp.iter().map(|l| exp(l - top)).collect();
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);
    Ok(GridConditional {
        missing,
        grid: *grid,
        mass,
    })
}

/// Strictly positive, normalised joint distribution over `(x, y)` stored
/// row-major with `x` as the row.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    nx: usize,
    ny: usize,
    p: Vec<f64>,
}

impl JointTable {
    pub fn new(nx: usize, ny: usize, p: Vec<f64>) -> Result<Self> {
        check_dim(nx * ny, p.len())?;
        if nx == 0 || ny == 0 || p.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::usage("joint table entries must be strictly positive"));
        }
        let total: f64 = p.iter().sum();
        if fabs(total - 1.0) > 1e-9 {
            return Err(Error::usage("joint table must sum to one"));
        }
        Ok(Self { nx, ny, p })
    }

    /// Random table with exponentially distributed weights.
    pub fn random<R: Rng + ?Sized>(nx: usize, ny: usize, rng: &mut R) -> Self {
        let w: Vec<f64> = (0..nx * ny).map(|_| -log(1.0 - rng.random::<f64>()) + 1e-9).collect();
        let total: f64 = w.iter().sum();
        Self {
            nx,
            ny,
            p: w.iter().map(|v| v / total).collect(),
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.p[x * self.ny + y]
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.p.chunks_exact(self.ny).map(|r| r.iter().sum()).collect()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Table `q(y|x) p(x)` combining this table's conditionals with `px`.
    pub fn with_x_marginal(&self, px: &[f64]) -> Result<Self> {
        check_dim(self.nx, px.len())?;
        let qx = self.marginal_x();
        let p = (0..self.nx * self.ny)
            .map(|i| self.p[i] / qx[i / self.ny] * px[i / self.ny])
            .collect();
        Ok(Self {
            nx: self.nx,
            ny: self.ny,
            p,
        })
    }
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * log(a / b)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlDecomposition {
    /// `D(p_xy || q_xy)`.
    pub lhs: f64,
    /// `E_x[D(p_y|x || q_y|x)]`.
    pub rhs: f64,
    /// `lhs - rhs`.
    pub slack: f64,
    /// `D(p_x || q_x)`, computed directly.
    pub marginal_kl: f64,
}

/// Split the joint KL divergence into its conditional and marginal parts.
pub fn kl_decomposition_check(p: &JointTable, q: &JointTable) -> Result<KlDecomposition> {
    if p.dims() != q.dims() {
        return Err(Error::usage("joint tables differ in shape"));
    }
    let (px, qx) = (p.marginal_x(), q.marginal_x());
    let lhs = kl(&p.p, &q.p);
    let mut rhs = 0.0;
    for x in 0..p.nx {
        let pc: Vec<f64> = (0..p.ny).map(|y| p.get(x, y) / px[x]).collect();
        let qc: Vec<f64> = (0..q.ny).map(|y| q.get(x, y) / qx[x]).collect();
        rhs += px[x] * kl(&pc, &qc);
    }
    Ok(KlDecomposition {
        lhs,
        rhs,
        slack: lhs - rhs,
        marginal_kl: kl(&px, &qx),
    })
}

/// `(D(p_xy || q_y|x p_x), D(p_xy || q_xy))`.
pub fn imputation_kl_terms(p: &JointTable, q: &JointTable) -> Result<(f64, f64)> {
    if p.dims() != q.dims() {
        return Err(Error::usage("joint tables differ in shape"));
    }
    let mixed = q.with_x_marginal(&p.marginal_x())?;
    Ok((kl(&p.p, &mixed.p), kl(&p.p, &q.p)))
}

/// Replacing the model's `x` marginal by the data's never increases the
/// divergence from the data: `D(p || q_y|x p_x) <= D(p || q)`.
pub fn imputation_kl_improvement_check(p: &JointTable, q: &JointTable) -> Result<bool> {
    let (mixed, joint) = imputation_kl_terms(p, q)?;
    Ok(mixed <= joint + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn independent_coordinates() {
        let a = DMatrix::identity(2, 2);
        let c = gaussian_conditional(&a, &[0.0, 0.0], &[(1, 5.0)]).unwrap();
        assert_eq!(c.missing, vec![0]);
        assert!(c.mean[0].abs() < 1e-15);
        assert!((c.cov[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn correlated_pair() {
        // A A^T = [[1, 0.9], [0.9, 1]]
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.9, sqrt(1.0 - 0.81)]);
        let c = gaussian_conditional(&a, &[0.0, 0.0], &[(0, 1.0)]).unwrap();
        assert!((c.mean[0] - 0.9).abs() < 1e-12);
        assert!((c.cov[(0, 0)] - 0.19).abs() < 1e-12);
    }

    #[test]
    fn singular_map_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(gaussian_conditional(&a, &[0.0, 0.0], &[(0, 1.0)]).unwrap_err(), Error::Singular);
    }

    #[test]
    fn grid_mass_is_normalised() {
        let spec = AffineFlowSpec::random(2, 3, 1.0, &mut stream(4, 0, 0, 0)).unwrap();
        let m = spec.to_flow().unwrap();
        let s = MaskedSample::from_observed(2, &[(0, 0.2)]).unwrap();
        let g = grid_conditional(&m, &s, &GridSpec::for_prior(PriorKind::Normal)).unwrap();
        assert!((g.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_tables_have_zero_divergence() {
        let p = JointTable::random(4, 4, &mut stream(1, 0, 0, 0));
        let d = kl_decomposition_check(&p, &p).unwrap();
        assert_eq!((d.lhs, d.rhs, d.slack), (0.0, 0.0, 0.0));
        let (mixed, joint) = imputation_kl_terms(&p, &p).unwrap();
        assert!(mixed.abs() < 1e-15 && joint == 0.0);
    }
}
