//! Additive-coupling normalizing flows with exact conditional sampling.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure
//! computation:
//!
//! * [`flow`]: a NICE-style flow with random-partition additive couplings,
//!   a diagonal scaling layer and a logistic or normal prior.
//! * [`grad`], [`optim`], [`train`]: hand-written reverse-mode gradients of
//!   the batch negative log-likelihood, RMSprop/Adamax and mini-batch
//!   training on complete data.
//! * [`sampler`]: projected latent Metropolis-Hastings (PL-MCMC) for sampling
//!   missing coordinates from the flow's conditional distribution, plus a
//!   data-space Gibbs baseline and acceptance diagnostics.
//! * [`mcem`]: Monte Carlo EM training from incomplete data.
//! * [`data`], [`metrics`], [`oracles`]: masking and whitening, imputation
//!   scores, and closed-form / brute-force reference distributions.
//!
//! File formats, CSV handling, threading and the command line live in the
//! `plmcmc` companion crate.
#![no_std]

extern crate alloc;

pub mod data;
pub mod error;
pub mod exec;
pub mod flow;
pub mod grad;
pub mod mcem;
pub mod metrics;
pub mod optim;
pub mod oracles;
pub mod rng;
pub mod sampler;
pub mod train;

pub use error::{Error, Result};
pub use flow::{FlowArch, FlowModel, PriorKind};
