//! RMSprop (classical momentum) and Adamax.

use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, pow, sqrt};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::flow::FlowModel;
use crate::grad::ParamGradients;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// `v = alpha v + (1 - alpha) g^2; buf = momentum buf + g / (sqrt(v) + eps); p -= lr buf`
    RmsProp {
        lr: f64,
        momentum: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    /// `m = b1 m + (1 - b1) g; u = max(b2 u, |g| + eps); p -= lr / (1 - b1^t) * m / u`
    Adamax {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_alpha() -> f64 {
    0.99
}
fn default_eps() -> f64 {
    1e-8
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}

impl OptimizerKind {
    /// RMSprop with the image-data settings (lr 1e-5, momentum 0.9).
    pub fn rmsprop_default() -> Self {
        OptimizerKind::RmsProp {
            lr: 1e-5,
            momentum: 0.9,
            alpha: default_alpha(),
            eps: default_eps(),
        }
    }

    /// Adamax with the tabular-data settings (lr 0.002, betas 0.9/0.999).
    pub fn adamax_default() -> Self {
        OptimizerKind::Adamax {
            lr: 0.002,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimizerKind::RmsProp { lr, .. } | OptimizerKind::Adamax { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerKind::RmsProp { lr, momentum, alpha, eps } => {
                lr > 0.0 && (0.0..1.0).contains(&momentum) && (0.0..1.0).contains(&alpha) && eps > 0.0
            }
            OptimizerKind::Adamax { lr, beta1, beta2, eps } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
        };
        if ok && self.learning_rate().is_finite() {
            Ok(())
        } else {
            Err(Error::usage("invalid optimizer hyper-parameters"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    /// Momentum buffer (RMSprop) or first moment (Adamax).
    first: Vec<f64>,
    /// Squared-gradient average (RMSprop) or infinity norm (Adamax).
    second: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, model: &FlowModel) -> Result<Self> {
        kind.validate()?;
        let n = model.param_count();
        Ok(Self {
            kind,
            first: vec![0.0; n],
            second: vec![0.0; n],
            step: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Apply one update. On non-finite gradients or a non-finite result the
    /// model and state are left untouched.
    pub fn step(&mut self, model: &mut FlowModel, grads: &ParamGradients) -> Result<()> {
        check_dim(self.first.len(), grads.values.len())?;
        check_dim(model.param_count(), grads.values.len())?;
        if let Some(index) = grads.values.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        let mut params = model.params();
        let mut first = self.first.clone();
        let mut second = self.second.clone();
        let t = self.step + 1;
        match self.kind {
            OptimizerKind::RmsProp { lr, momentum, alpha, eps } => {
                for i in 0..params.len() {
                    let g = grads.values[i];
                    second[i] = alpha * second[i] + (1.0 - alpha) * g * g;
                    first[i] = momentum * first[i] + g / (sqrt(second[i]) + eps);
                    params[i] -= lr * first[i];
                }
            }
            OptimizerKind::Adamax { lr, beta1, beta2, eps } => {
                let step_size = lr / (1.0 - pow(beta1, t as f64));
                for i in 0..params.len() {
                    let g = grads.values[i];
                    first[i] = beta1 * first[i] + (1.0 - beta1) * g;
                    second[i] = (beta2 * second[i]).max(fabs(g) + eps);
                    params[i] -= step_size * first[i] / second[i];
                }
            }
        }
        if let Some(index) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFiniteParameter { index });
        }
        model.set_params(&params)?;
        self.first = first;
        self.second = second;
        self.step = t;
        Ok(())
    }
}

/// Rescale `grads` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut ParamGradients, max_norm: f64) {
    let norm = grads.norm();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        grads.values.iter_mut().for_each(|g| *g *= s);
    }
}
