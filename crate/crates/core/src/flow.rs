//! NICE-style normalizing flow.
//!
//! The data-to-latent direction ([`FlowModel::inverse`]) applies the coupling
//! layers in order and then divides by the diagonal scale:
//!
//! ```text
//! z_0 = x
//! z_{k+1} = z_k with z_dst += net_k(z_src)      k = 0..L
//! xi = z_L * exp(-log_scale)
//! ```
//!
//! The latent-to-data direction ([`FlowModel::forward`]) undoes the same
//! steps in reverse, so `log|det d forward / d xi| = sum(log_scale)`. Coupling
//! layers are volume preserving and share one random partition of the
//! coordinates into two halves; even layers update the second half from the
//! first, odd layers the first half from the second.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log, log1p, sqrt};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::rng::{domain, stream};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log(1 + exp(t))` without overflow.
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + log1p(exp(-t))
    } else {
        log1p(exp(t))
    }
}

/// Independent prior over latent coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Logistic,
    Normal,
}

impl PriorKind {
    pub fn log_pdf(self, z: f64) -> f64 {
        match self {
            PriorKind::Normal => -0.5 * z * z - 0.5 * LN_2PI,
            // log(e^-z / (1 + e^-z)^2)
            PriorKind::Logistic => -z - 2.0 * softplus(-z),
        }
    }

    /// d/dz of [`log_pdf`](Self::log_pdf).
    pub fn d_log_pdf(self, z: f64) -> f64 {
        match self {
            PriorKind::Normal => -z,
            PriorKind::Logistic => -libm::tanh(0.5 * z),
        }
    }

    pub fn std_dev(self) -> f64 {
        match self {
            PriorKind::Normal => 1.0,
            PriorKind::Logistic => core::f64::consts::PI / sqrt(3.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            PriorKind::Normal => StandardNormal.sample(rng),
            PriorKind::Logistic => {
                let u: f64 = Open01.sample(rng);
                log(u) - log1p(-u)
            }
        }
    }
}

/// Fully connected layer, `out = weights * input + bias` with `weights`
/// stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform Glorot initialisation with zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = sqrt(6.0 / (inputs + outputs) as f64);
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| dist.sample(rng)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    pub(crate) fn apply(&self, input: &[f64], out: &mut [f64]) {
        for ((o, row), b) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs))
            .zip(&self.bias)
        {
            *o = row.iter().zip(input).fold(*b, |acc, (w, x)| acc + w * x);
        }
    }

    fn validate(&self) -> Result<()> {
        check_dim(self.inputs * self.outputs, self.weights.len())?;
        check_dim(self.outputs, self.bias.len())?;
        check_finite(&self.weights, "dense weights")?;
        check_finite(&self.bias, "dense bias")
    }
}

/// Rectifier network with a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`, Glorot-initialised.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect(),
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// Network computing exactly `matrix * x + bias` (`matrix` is row-major
    /// `outputs x inputs`), using `relu(x) - relu(-x) = x` in one hidden layer
    /// of width `2 * inputs`.
    pub fn from_linear_map(inputs: usize, outputs: usize, matrix: &[f64], bias: &[f64]) -> Result<Self> {
        check_dim(inputs * outputs, matrix.len())?;
        check_dim(outputs, bias.len())?;
        let mut hidden = Dense::zeros(inputs, 2 * inputs);
        for i in 0..inputs {
            hidden.weights[i * inputs + i] = 1.0;
            hidden.weights[(inputs + i) * inputs + i] = -1.0;
        }
        let mut out = Dense::zeros(2 * inputs, outputs);
        for r in 0..outputs {
            for c in 0..inputs {
                let m = matrix[r * inputs + c];
                out.weights[r * 2 * inputs + c] = m;
                out.weights[r * 2 * inputs + inputs + c] = -m;
            }
        }
        out.bias.copy_from_slice(bias);
        Ok(Self { layers: vec![hidden, out] })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Evaluate into `out`, using `scratch` as ping-pong storage.
    pub(crate) fn eval_into(&self, input: &[f64], out: &mut [f64], scratch: &mut [Vec<f64>; 2]) {
        let n = self.layers.len();
        let [cur, next] = scratch;
        cur.clear();
        cur.extend_from_slice(input);
        for (l, layer) in self.layers.iter().enumerate() {
            if l + 1 == n {
                layer.apply(cur, out);
            } else {
                next.clear();
                next.resize(layer.outputs, 0.0);
                layer.apply(cur, next);
                next.iter_mut().for_each(|v| *v = v.max(0.0));
                core::mem::swap(cur, next);
            }
        }
    }

    fn validate(&self, inputs: usize, outputs: usize) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::usage("coupling network has no layers"));
        }
        check_dim(inputs, self.input_dim())?;
        check_dim(outputs, self.output_dim())?;
        for pair in self.layers.windows(2) {
            check_dim(pair[0].outputs, pair[1].inputs)?;
        }
        self.layers.iter().try_for_each(Dense::validate)
    }
}

/// Which half of the partition a coupling layer shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingLayer {
    /// Half receiving the additive shift; the network reads the other half.
    pub shifts: Half,
    pub net: Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingLayer {
    pub log_scale: Vec<f64>,
}

/// Architecture hyper-parameters for [`FlowModel::new`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowArch {
    /// Number of coupling layers.
    pub coupling_layers: usize,
    /// Hidden layers in each coupling network.
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub prior: PriorKind,
}

impl Default for FlowArch {
    fn default() -> Self {
        Self {
            coupling_layers: 4,
            hidden_layers: 5,
            hidden_width: 120,
            prior: PriorKind::Normal,
        }
    }
}

/// Reusable buffers for flow evaluation.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    src: Vec<f64>,
    shift: Vec<f64>,
    mlp: [Vec<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFlow", into = "RawFlow")]
pub struct FlowModel {
    dim: usize,
    prior: PriorKind,
    partition_seed: u64,
    /// `in_second[i]` is true when coordinate `i` belongs to the second half.
    in_second: Vec<bool>,
    first: Vec<usize>,
    second: Vec<usize>,
    couplings: Vec<CouplingLayer>,
    scaling: ScalingLayer,
}

#[derive(Serialize, Deserialize)]
struct RawFlow {
    dim: usize,
    prior: PriorKind,
    partition_seed: u64,
    partition: Vec<u8>,
    couplings: Vec<CouplingLayer>,
    log_scale: Vec<f64>,
}

impl TryFrom<RawFlow> for FlowModel {
    type Error = Error;

    fn try_from(raw: RawFlow) -> Result<Self> {
        if raw.partition.iter().any(|&b| b > 1) {
            return Err(Error::usage("partition bits must be 0 or 1"));
        }
        let mut model = FlowModel::from_parts(
            raw.prior,
            raw.partition.iter().map(|&b| b == 1).collect(),
            raw.couplings,
            raw.log_scale,
        )?;
        check_dim(raw.dim, model.dim)?;
        model.partition_seed = raw.partition_seed;
        Ok(model)
    }
}

impl From<FlowModel> for RawFlow {
    fn from(m: FlowModel) -> Self {
        RawFlow {
            dim: m.dim,
            prior: m.prior,
            partition_seed: m.partition_seed,
            partition: m.in_second.iter().map(|&b| u8::from(b)).collect(),
            couplings: m.couplings,
            log_scale: m.scaling.log_scale,
        }
    }
}

fn random_partition(dim: usize, seed: u64) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.shuffle(&mut stream(seed, domain::INIT, 0, 0));
    let mut in_second = vec![false; dim];
    for &i in &idx[dim / 2..] {
        in_second[i] = true;
    }
    in_second
}

fn check_even_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::usage("flow dimension must be even and positive"));
    }
    Ok(())
}

impl FlowModel {
    /// Randomly initialised flow. The partition and the weights are both
    /// derived from `seed`.
    pub fn new(dim: usize, arch: &FlowArch, seed: u64) -> Result<Self> {
        check_even_dim(dim)?;
        let in_second = random_partition(dim, seed);
        let half = dim / 2;
        let mut sizes = vec![half];
        sizes.extend(core::iter::repeat(arch.hidden_width).take(arch.hidden_layers));
        sizes.push(half);
        let mut rng = stream(seed, domain::INIT, 1, 0);
        let couplings = (0..arch.coupling_layers)
            .map(|k| CouplingLayer {
                shifts: if k % 2 == 0 { Half::Second } else { Half::First },
                net: Mlp::new(&sizes, &mut rng),
            })
            .collect();
        let mut model = Self::from_parts(arch.prior, in_second, couplings, vec![0.0; dim])?;
        model.partition_seed = seed;
        Ok(model)
    }

    /// Flow whose parameters are all zero (the identity map).
    pub fn zeros(dim: usize, arch: &FlowArch, partition_seed: u64) -> Result<Self> {
        let mut model = Self::new(dim, arch, partition_seed)?;
        model.for_each_param_slice_mut(|s| s.fill(0.0));
        Ok(model)
    }

    /// Flow from explicit parameters. `in_second` marks the coordinates of
    /// the second half and must have exactly `dim / 2` set entries.
    pub fn from_parts(
        prior: PriorKind,
        in_second: Vec<bool>,
        couplings: Vec<CouplingLayer>,
        log_scale: Vec<f64>,
    ) -> Result<Self> {
        let dim = in_second.len();
        check_even_dim(dim)?;
        check_dim(dim, log_scale.len())?;
        check_finite(&log_scale, "log scale")?;
        let first: Vec<usize> = (0..dim).filter(|&i| !in_second[i]).collect();
        let second: Vec<usize> = (0..dim).filter(|&i| in_second[i]).collect();
        if second.len() != dim / 2 {
            return Err(Error::usage("partition must split the coordinates in half"));
        }
        for c in &couplings {
            c.net.validate(dim / 2, dim / 2)?;
        }
        Ok(Self {
            dim,
            prior,
            partition_seed: 0,
            in_second,
            first,
            second,
            couplings,
            scaling: ScalingLayer { log_scale },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prior(&self) -> PriorKind {
        self.prior
    }

    pub fn partition_seed(&self) -> u64 {
        self.partition_seed
    }

    pub fn partition(&self) -> &[bool] {
        &self.in_second
    }

    pub fn couplings(&self) -> &[CouplingLayer] {
        &self.couplings
    }

    pub fn log_scale(&self) -> &[f64] {
        &self.scaling.log_scale
    }

    /// Mutable access to the log scales. Values must stay finite.
    pub fn log_scale_mut(&mut self) -> &mut [f64] {
        &mut self.scaling.log_scale
    }

    /// Mutable access to one coupling network. Its shape must not change.
    pub fn coupling_net_mut(&mut self, layer: usize) -> &mut Mlp {
        &mut self.couplings[layer].net
    }

    /// `log|det d forward / d xi|`; constant because couplings preserve volume.
    pub fn forward_logdet(&self) -> f64 {
        self.scaling.log_scale.iter().sum()
    }

    /// `(source, destination)` coordinate lists for coupling layer `k`.
    pub(crate) fn halves(&self, k: usize) -> (&[usize], &[usize]) {
        match self.couplings[k].shifts {
            Half::Second => (&self.first, &self.second),
            Half::First => (&self.second, &self.first),
        }
    }

    fn check_input(&self, v: &[f64], what: &'static str) -> Result<()> {
        check_dim(self.dim, v.len())?;
        check_finite(v, what)
    }

    /// Apply coupling `k` in place, adding (`sign = 1`) or subtracting the shift.
    #[inline]
    fn couple(&self, k: usize, z: &mut [f64], sign: f64, ws: &mut Workspace) {
        let (src, dst) = self.halves(k);
        ws.src.clear();
        ws.src.extend(src.iter().map(|&i| z[i]));
        ws.shift.resize(dst.len(), 0.0);
        self.couplings[k].net.eval_into(&ws.src, &mut ws.shift, &mut ws.mlp);
        for (&i, s) in dst.iter().zip(&ws.shift) {
            z[i] += sign * s;
        }
    }

    /// Latent to data: returns `(x, log|det dx/dxi|)`.
    pub fn forward(&self, xi: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut out = Vec::new();
        let logdet = self.forward_with(xi, &mut out, &mut Workspace::default())?;
        Ok((out, logdet))
    }

    pub fn forward_with(&self, xi: &[f64], out: &mut Vec<f64>, ws: &mut Workspace) -> Result<f64> {
        self.check_input(xi, "latent vector")?;
        out.clear();
        out.extend(xi.iter().zip(&self.scaling.log_scale).map(|(v, s)| v * exp(*s)));
        for k in (0..self.couplings.len()).rev() {
            self.couple(k, out, -1.0, ws);
        }
        Ok(self.forward_logdet())
    }

    /// Data to latent: returns `(xi, log|det dxi/dx|)`.
    pub fn inverse(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut out = Vec::new();
        let logdet = self.inverse_with(x, &mut out, &mut Workspace::default())?;
        Ok((out, logdet))
    }

    pub fn inverse_with(&self, x: &[f64], out: &mut Vec<f64>, ws: &mut Workspace) -> Result<f64> {
        self.check_input(x, "data vector")?;
        out.clear();
        out.extend_from_slice(x);
        for k in 0..self.couplings.len() {
            self.couple(k, out, 1.0, ws);
        }
        for (v, s) in out.iter_mut().zip(&self.scaling.log_scale) {
            *v *= exp(-*s);
        }
        Ok(-self.forward_logdet())
    }

    /// Prior log-density of a latent vector (no dimension checks).
    pub fn prior_log_density(&self, xi: &[f64]) -> f64 {
        xi.iter().map(|&z| self.prior.log_pdf(z)).sum()
    }

    /// `log p(x)` by change of variables.
    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        self.log_prob_with(x, &mut Vec::new(), &mut Workspace::default())
    }

    pub fn log_prob_with(&self, x: &[f64], latent: &mut Vec<f64>, ws: &mut Workspace) -> Result<f64> {
        let logdet = self.inverse_with(x, latent, ws)?;
        Ok(self.prior_log_density(latent) + logdet)
    }

    /// Independent prior draws with every coordinate multiplied by `scale`.
    pub fn sample_prior<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> Result<Vec<f64>> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::usage("prior sampling scale must be positive"));
        }
        Ok((0..self.dim).map(|_| scale * self.prior.sample(rng)).collect())
    }

    /// Number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let nets: usize = self
            .couplings
            .iter()
            .flat_map(|c| &c.net.layers)
            .map(|d| d.weights.len() + d.bias.len())
            .sum();
        nets + self.dim
    }

    /// Visit parameter blocks in canonical order: per coupling, per dense
    /// layer, weights then bias; the log scales last.
    pub fn for_each_param_slice(&self, mut f: impl FnMut(&[f64])) {
        for d in self.couplings.iter().flat_map(|c| &c.net.layers) {
            f(&d.weights);
            f(&d.bias);
        }
        f(&self.scaling.log_scale);
    }

    pub fn for_each_param_slice_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for d in self.couplings.iter_mut().flat_map(|c| &mut c.net.layers) {
            f(&mut d.weights);
            f(&mut d.bias);
        }
        f(&mut self.scaling.log_scale);
    }

    /// All parameters flattened in canonical order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.for_each_param_slice(|s| out.extend_from_slice(s));
        out
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        check_dim(self.param_count(), values.len())?;
        check_finite(values, "parameters")?;
        let mut offset = 0;
        self.for_each_param_slice_mut(|s| {
            s.copy_from_slice(&values[offset..offset + s.len()]);
            offset += s.len();
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn small_arch(prior: PriorKind) -> FlowArch {
        FlowArch {
            coupling_layers: 4,
            hidden_layers: 2,
            hidden_width: 8,
            prior,
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zero_model_is_identity() {
        let m = FlowModel::zeros(2, &small_arch(PriorKind::Normal), 3).unwrap();
        let (x, ld) = m.forward(&[0.7, -2.5]).unwrap();
        assert_eq!(x, vec![0.7, -2.5]);
        assert_eq!(ld, 0.0);
        let (xi, ld) = m.inverse(&[0.3, -1.2]).unwrap();
        assert_eq!(xi, vec![0.3, -1.2]);
        assert_eq!(ld, 0.0);
    }

    #[test]
    fn diagonal_scaling() {
        let mut m = FlowModel::zeros(2, &small_arch(PriorKind::Normal), 0).unwrap();
        m.log_scale_mut().fill(core::f64::consts::LN_2);
        let (x, ld) = m.forward(&[1.0, 1.0]).unwrap();
        assert!(close(x[0], 2.0, 1e-15) && close(x[1], 2.0, 1e-15));
        assert!(close(ld, 2.0 * core::f64::consts::LN_2, 1e-15));
        let (xi, ld) = m.inverse(&[2.0, 2.0]).unwrap();
        assert!(close(xi[0], 1.0, 1e-15) && close(xi[1], 1.0, 1e-15));
        assert!(close(ld, -2.0 * core::f64::consts::LN_2, 1e-15));
    }

    #[test]
    fn log_prob_at_origin() {
        let m = FlowModel::zeros(2, &small_arch(PriorKind::Normal), 0).unwrap();
        assert!(close(m.log_prob(&[0.0, 0.0]).unwrap(), -1.837_877, 1e-6));
        // Logistic density at 0 is 1/4 per coordinate.
        let m = FlowModel::zeros(2, &small_arch(PriorKind::Logistic), 0).unwrap();
        assert!(close(m.log_prob(&[0.0, 0.0]).unwrap(), 2.0 * -1.386_294, 1e-6));
        assert!(close(PriorKind::Logistic.log_pdf(0.0), -1.386_294, 1e-6));
    }

    #[test]
    fn logistic_log_pdf_is_stable_in_the_tails() {
        for z in [-800.0, -40.0, 40.0, 800.0] {
            let v = PriorKind::Logistic.log_pdf(z);
            assert!(v.is_finite());
            assert!(close(v, -libm::fabs(z), 1e-9 * libm::fabs(z)));
        }
    }

    #[test]
    fn random_round_trip() {
        let m = FlowModel::new(4, &small_arch(PriorKind::Logistic), 11).unwrap();
        let mut rng = stream(5, 0, 0, 0);
        for _ in 0..50 {
            let xi = m.sample_prior(2.0, &mut rng).unwrap();
            let (x, fwd) = m.forward(&xi).unwrap();
            let (back, inv) = m.inverse(&x).unwrap();
            let norm = xi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (a, b) in xi.iter().zip(&back) {
                assert!((a - b).abs() <= 1e-9 * (1.0 + norm));
            }
            assert_eq!(fwd, -inv);
        }
    }

    #[test]
    fn partition_is_balanced_and_shared() {
        let m = FlowModel::new(10, &small_arch(PriorKind::Normal), 2).unwrap();
        assert_eq!(m.partition().iter().filter(|&&b| b).count(), 5);
        assert_eq!(m.couplings()[0].shifts, Half::Second);
        assert_eq!(m.couplings()[1].shifts, Half::First);
        let again = FlowModel::new(10, &small_arch(PriorKind::Normal), 2).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn rejects_bad_input() {
        let m = FlowModel::zeros(2, &small_arch(PriorKind::Normal), 0).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(m.inverse(&[f64::NAN, 0.0]), Err(Error::NonFinite(_))));
        assert!(matches!(m.log_prob(&[f64::INFINITY, 0.0]), Err(Error::NonFinite(_))));
        let mut rng = stream(0, 0, 0, 0);
        assert!(m.sample_prior(0.0, &mut rng).is_err());
        assert!(m.sample_prior(-1.0, &mut rng).is_err());
        assert!(FlowModel::new(3, &small_arch(PriorKind::Normal), 0).is_err());
    }

    #[test]
    fn linear_map_network_is_exact() {
        let mat = [1.5, -2.0, 0.25, 3.0];
        let net = Mlp::from_linear_map(2, 2, &mat, &[0.5, -1.0]).unwrap();
        let mut out = [0.0; 2];
        net.eval_into(&[0.2, -0.7], &mut out, &mut Default::default());
        assert!(close(out[0], 1.5 * 0.2 + 2.0 * 0.7 + 0.5, 1e-15));
        assert!(close(out[1], 0.25 * 0.2 - 3.0 * 0.7 - 1.0, 1e-15));
    }

    #[test]
    fn params_round_trip() {
        let mut m = FlowModel::new(4, &small_arch(PriorKind::Normal), 1).unwrap();
        let p = m.params();
        assert_eq!(p.len(), m.param_count());
        let shifted: Vec<f64> = p.iter().map(|v| v + 1.0).collect();
        m.set_params(&shifted).unwrap();
        assert_eq!(m.params(), shifted);
        assert!(m.set_params(&p[1..]).is_err());
    }
}
