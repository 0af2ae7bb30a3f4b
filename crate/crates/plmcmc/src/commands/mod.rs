use std::path::Path;

use clap::{Args, ValueEnum};
use plmcmc_core::sampler::{AuxiliaryDensity, InitPolicy, KernelDensity, SamplerConfig};
use serde::Serialize;

use crate::error::Result;
use crate::io::write_json;

pub mod diagnose;
pub mod impute;
pub mod sample;
pub mod train;

/// Parse an auxiliary density: a positive scale, or `uniform`.
pub fn parse_aux(s: &str) -> std::result::Result<AuxiliaryDensity, String> {
    if s.eq_ignore_ascii_case("uniform") {
        return Ok(AuxiliaryDensity::ImproperUniform);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(AuxiliaryDensity::normal(v)),
        _ => Err(format!("`{s}` is neither a positive scale nor `uniform`")),
    }
}

pub fn aux_label(aux: &AuxiliaryDensity) -> String {
    match aux {
        AuxiliaryDensity::ImproperUniform => "uniform".into(),
        AuxiliaryDensity::Normal { scale, .. } => scale.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelArg {
    Tagged,
    ExactMixture,
}

impl From<KernelArg> for KernelDensity {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Tagged => KernelDensity::Tagged,
            KernelArg::ExactMixture => KernelDensity::ExactMixture,
        }
    }
}

/// PL-MCMC settings shared by the sampling commands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SamplerArgs {
    /// Standard deviation of the latent perturbation kernel.
    #[arg(long, default_value_t = 0.01)]
    pub perturb_scale: f64,
    /// Standard deviation of the latent resampling kernel.
    #[arg(long, default_value_t = 1.0)]
    pub resample_scale: f64,
    /// Probability of a resampling proposal.
    #[arg(long, default_value_t = 0.5)]
    pub resample_prob: f64,
    /// Auxiliary scale, or `uniform` for the improper uniform density.
    #[arg(long, default_value = "0.001", value_parser = parse_aux)]
    pub aux_scale: AuxiliaryDensity,
    #[arg(long, default_value_t = 1000)]
    pub proposals: usize,
    /// Prior scale of the initial latent draw.
    #[arg(long, default_value_t = 0.5)]
    pub init_scale: f64,
    #[arg(long, value_enum, default_value_t = KernelArg::Tagged)]
    pub kernel_density: KernelArg,
}

impl SamplerArgs {
    pub fn config(&self) -> SamplerConfig {
        SamplerConfig {
            perturb_scale: self.perturb_scale,
            resample_scale: self.resample_scale,
            resample_prob: self.resample_prob,
            aux: self.aux_scale,
            proposals: self.proposals,
            init: InitPolicy::PriorSample { scale: self.init_scale },
            kernel_density: self.kernel_density.into(),
            checkpoint_interval: 0,
            record_proposals: false,
        }
    }
}

/// Write the arguments of a run next to its outputs.
pub(crate) fn write_resolved<T: Serialize>(out: &Path, args: &T) -> Result<String> {
    write_json(&out.join("resolved_config.json"), args)?;
    let bytes = serde_json::to_vec(args).expect("arguments serialize");
    use sha2::Digest;
    Ok(hex::encode(sha2::Sha256::digest(bytes)))
}

/// Shortest round-tripping decimal form.
pub(crate) fn num(v: f64) -> String {
    v.to_string()
}
