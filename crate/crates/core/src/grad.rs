//! Reverse-mode gradients of the mean negative log-likelihood.
//!
//! Per example the loss is `-log prior(xi) + sum(log_scale)` with
//! `xi = g(x) * exp(-log_scale)` and `g` the coupling stack. The backward
//! pass walks the couplings in reverse; each coupling routes the gradient of
//! its shifted half through the network back into its source half.

use alloc::vec;
use alloc::vec::Vec;

use libm::exp;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::exec::{Executor, Sequential};
use crate::flow::{FlowModel, Mlp};

/// Rows handled per work item. Fixed so that the reduction order, and hence
/// every bit of the result, does not depend on the executor.
const CHUNK_ROWS: usize = 32;

/// Gradient with respect to every model parameter, flattened in the
/// canonical order of [`FlowModel::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub values: Vec<f64>,
}

impl ParamGradients {
    pub fn zeros_like(model: &FlowModel) -> Self {
        Self {
            values: vec![0.0; model.param_count()],
        }
    }

    pub fn is_congruent(&self, model: &FlowModel) -> bool {
        self.values.len() == model.param_count()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|g| g * g).sum())
    }

    /// Gradient of the log-scale parameters (the trailing block).
    pub fn log_scale<'a>(&'a self, model: &FlowModel) -> &'a [f64] {
        &self.values[self.values.len() - model.dim()..]
    }
}

/// Per-layer activations of one coupling network (input first).
struct NetTape {
    acts: Vec<Vec<f64>>,
}

fn net_forward(net: &Mlp, input: &[f64], out: &mut Vec<f64>) -> NetTape {
    let mut acts = Vec::with_capacity(net.layers.len());
    acts.push(input.to_vec());
    let n = net.layers.len();
    for (l, layer) in net.layers.iter().enumerate() {
        let mut next = vec![0.0; layer.outputs];
        layer.apply(acts.last().expect("input pushed"), &mut next);
        if l + 1 == n {
            *out = next;
        } else {
            next.iter_mut().for_each(|v| *v = v.max(0.0));
            acts.push(next);
        }
    }
    NetTape { acts }
}

/// Accumulate parameter gradients of `net` into `grads` (the network's slice
/// of the flat gradient) and return the gradient with respect to its input.
fn net_backward(net: &Mlp, tape: &NetTape, grad_out: &[f64], grads: &mut [f64]) -> Vec<f64> {
    // Offsets of each layer's (weights, bias) block inside `grads`.
    let mut offsets = Vec::with_capacity(net.layers.len());
    let mut off = 0;
    for layer in &net.layers {
        offsets.push(off);
        off += layer.weights.len() + layer.bias.len();
    }
    let mut delta = grad_out.to_vec();
    for l in (0..net.layers.len()).rev() {
        let layer = &net.layers[l];
        let input = &tape.acts[l];
        let (gw, gb) = grads[offsets[l]..offsets[l] + layer.weights.len() + layer.bias.len()]
            .split_at_mut(layer.weights.len());
        for (r, d) in delta.iter().enumerate() {
            gb[r] += d;
            if *d != 0.0 {
                let row = &mut gw[r * layer.inputs..(r + 1) * layer.inputs];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
        }
        let mut g_in = vec![0.0; layer.inputs];
        for (d, row) in delta.iter().zip(layer.weights.chunks_exact(layer.inputs)) {
            if *d != 0.0 {
                for (g, w) in g_in.iter_mut().zip(row) {
                    *g += d * w;
                }
            }
        }
        if l > 0 {
            // relu'(pre) = 1 exactly where the stored activation is positive
            for (g, a) in g_in.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        delta = g_in;
    }
    delta
}

/// Offsets of each coupling network's block in the flat parameter vector.
fn coupling_offsets(model: &FlowModel) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(model.couplings().len());
    let mut off = 0;
    for c in model.couplings() {
        offsets.push(off);
        off += c.net.layers.iter().map(|d| d.weights.len() + d.bias.len()).sum::<usize>();
    }
    offsets
}

/// Add the gradient of `-log p(x)` to `grads` and return `-log p(x)`.
fn accumulate_row(model: &FlowModel, offsets: &[usize], x: &[f64], grads: &mut [f64]) -> f64 {
    let dim = model.dim();
    let ncoup = model.couplings().len();
    let mut z = x.to_vec();
    let mut tapes = Vec::with_capacity(ncoup);
    let mut shift = Vec::new();
    for k in 0..ncoup {
        let (src, dst) = model.halves(k);
        let input: Vec<f64> = src.iter().map(|&i| z[i]).collect();
        tapes.push(net_forward(&model.couplings()[k].net, &input, &mut shift));
        for (&i, s) in dst.iter().zip(&shift) {
            z[i] += s;
        }
    }
    let prior = model.prior();
    let log_scale = model.log_scale();
    let ls_off = grads.len() - dim;
    let mut loss = 0.0;
    for i in 0..dim {
        let inv_scale = exp(-log_scale[i]);
        let xi = z[i] * inv_scale;
        loss += log_scale[i] - prior.log_pdf(xi);
        let g_xi = -prior.d_log_pdf(xi);
        grads[ls_off + i] += 1.0 - g_xi * xi;
        // reuse z as the gradient buffer
        z[i] = g_xi * inv_scale;
    }
    let gz = &mut z;
    for k in (0..ncoup).rev() {
        let (src, dst) = model.halves(k);
        let g_out: Vec<f64> = dst.iter().map(|&i| gz[i]).collect();
        let net = &model.couplings()[k].net;
        let end = offsets.get(k + 1).copied().unwrap_or(ls_off);
        let g_in = net_backward(net, &tapes[k], &g_out, &mut grads[offsets[k]..end]);
        for (&i, g) in src.iter().zip(&g_in) {
            gz[i] += g;
        }
    }
    loss
}

/// Mean negative log-likelihood of `batch` and its exact gradient.
pub fn nll_and_grad(model: &FlowModel, batch: &[&[f64]]) -> Result<(f64, ParamGradients)> {
    nll_and_grad_with(model, batch, &Sequential)
}

/// As [`nll_and_grad`], fanning fixed-size row chunks out over `exec`.
pub fn nll_and_grad_with<E: Executor>(
    model: &FlowModel,
    batch: &[&[f64]],
    exec: &E,
) -> Result<(f64, ParamGradients)> {
    if batch.is_empty() {
        return Err(Error::usage("gradient batch is empty"));
    }
    for row in batch {
        check_dim(model.dim(), row.len())?;
        check_finite(row, "training row")?;
    }
    let offsets = coupling_offsets(model);
    let n_params = model.param_count();
    let n_chunks = batch.len().div_ceil(CHUNK_ROWS);
    let partials = exec.map(n_chunks, |c| {
        let rows = &batch[c * CHUNK_ROWS..((c + 1) * CHUNK_ROWS).min(batch.len())];
        let mut g = vec![0.0; n_params];
        let loss: f64 = rows.iter().map(|x| accumulate_row(model, &offsets, x, &mut g)).sum();
        (loss, g)
    });
    let mut total = 0.0;
    let mut grads = vec![0.0; n_params];
    for (loss, g) in partials {
        total += loss;
        grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let inv_n = 1.0 / batch.len() as f64;
    grads.iter_mut().for_each(|g| *g *= inv_n);
    Ok((total * inv_n, ParamGradients { values: grads }))
}

/// Mean negative log-likelihood without gradients.
pub fn mean_nll<E: Executor>(model: &FlowModel, rows: &[&[f64]], exec: &E) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::usage("no rows to evaluate"));
    }
    let n_chunks = rows.len().div_ceil(CHUNK_ROWS);
    let partials = exec.map(n_chunks, |c| {
        let mut ws = Default::default();
        let mut latent = Vec::new();
        rows[c * CHUNK_ROWS..((c + 1) * CHUNK_ROWS).min(rows.len())]
            .iter()
            .map(|x| model.log_prob_with(x, &mut latent, &mut ws).map(|lp| -lp))
            .sum::<Result<f64>>()
    });
    let mut total = 0.0;
    for p in partials {
        total += p?;
    }
    Ok(total / rows.len() as f64)
}
