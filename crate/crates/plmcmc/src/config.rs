//! Experiment configuration for `plmcmc train`.
//!
//! Values are resolved in this order, later sources winning:
//! built-in defaults, the JSON file, `--set /pointer=value` overrides in
//! command-line order, then dedicated flags such as `--seed`.

use std::path::{Path, PathBuf};

use plmcmc_core::data::MaskSpec;
use plmcmc_core::mcem::McemConfig;
use plmcmc_core::optim::OptimizerKind;
use plmcmc_core::sampler::SamplerConfig;
use plmcmc_core::{FlowArch, PriorKind};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    /// Mask applied to a complete table. Without it the table's own empty
    /// cells are the missing entries.
    #[serde(default)]
    pub mask: Option<MaskSpec>,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub mcem: McemSection,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default = "OptimizerKind::adamax_default")]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Doubling {
    /// Double only tables with an odd number of columns.
    #[default]
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// Complete table for scoring when `path` is already incomplete.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    /// Copies of the masked training rows.
    #[serde(default = "one")]
    pub duplicate: usize,
    #[serde(default)]
    pub double_attributes: Doubling,
    #[serde(default = "yes")]
    pub whiten: bool,
    /// Image shape `[height, width]`, needed by the patch and square masks.
    #[serde(default)]
    pub grid: Option<[usize; 2]>,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// `levels` coupling layers, each with a `depth`-layer network of width
/// `hidden`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub levels: usize,
    pub depth: usize,
    pub hidden: usize,
    pub prior: PriorKind,
}

impl Default for FlowConfig {
    fn default() -> Self {
        let arch = FlowArch::default();
        Self {
            levels: arch.coupling_layers,
            depth: arch.hidden_layers,
            hidden: arch.hidden_width,
            prior: arch.prior,
        }
    }
}

impl FlowConfig {
    pub fn arch(&self) -> FlowArch {
        FlowArch {
            coupling_layers: self.levels,
            hidden_layers: self.depth,
            hidden_width: self.hidden,
            prior: self.prior,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McemSection {
    pub total_epochs: usize,
    pub warmup_epochs: usize,
    pub resample_interval: usize,
    pub batch_size: usize,
    pub clamp: bool,
    pub clip_norm: Option<f64>,
    pub resample_scale_schedule: Vec<(usize, f64)>,
}

impl Default for McemSection {
    fn default() -> Self {
        let d = McemConfig::default();
        Self {
            total_epochs: d.total_epochs,
            warmup_epochs: d.warmup_epochs,
            resample_interval: d.resample_interval,
            batch_size: d.batch_size,
            clamp: d.clamp,
            clip_norm: d.clip_norm,
            resample_scale_schedule: d.resample_scale_schedule,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Chains averaged for the final imputation.
    pub chains: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { chains: 25 }
    }
}

impl ExperimentConfig {
    pub fn mcem(&self) -> McemConfig {
        McemConfig {
            total_epochs: self.mcem.total_epochs,
            resample_interval: self.mcem.resample_interval,
            warmup_epochs: self.mcem.warmup_epochs,
            sampler: self.sampler.clone(),
            optimizer: self.optimizer,
            batch_size: self.mcem.batch_size,
            clamp: self.mcem.clamp,
            clip_norm: self.mcem.clip_norm,
            resample_scale_schedule: self.mcem.resample_scale_schedule.clone(),
        }
    }

    /// Semantic checks beyond what the schema expresses.
    pub fn validate(&self) -> Result<()> {
        let bad = |pointer: &str, message: &str| {
            Err(AppError::Config {
                pointer: pointer.into(),
                message: message.into(),
            })
        };
        if self.schema_version != SCHEMA_VERSION {
            return bad("/schema_version", &format!("unsupported version, expected {SCHEMA_VERSION}"));
        }
        if self.dataset.duplicate == 0 {
            return bad("/dataset/duplicate", "must be at least 1");
        }
        if self.flow.levels == 0 || self.flow.hidden == 0 {
            return bad("/flow", "levels and hidden must be positive");
        }
        if self.evaluation.chains == 0 {
            return bad("/evaluation/chains", "must be at least 1");
        }
        self.mcem().validate().or_else(|e| bad("/mcem", &e.to_string()))
    }

    /// Make relative dataset paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.path);
        if let Some(t) = &mut self.dataset.truth {
            fix(t);
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Split `"/a/b=value"`; the value is parsed as JSON and taken as a plain
/// string when that fails.
pub fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (pointer, raw) = spec
        .split_once('=')
        .ok_or_else(|| AppError::usage(format!("override `{spec}` is not of the form /pointer=value")))?;
    if !pointer.starts_with('/') {
        return Err(AppError::usage(format!("override pointer `{pointer}` must start with `/`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((pointer.to_string(), value))
}

/// Set `pointer` in `doc`, creating intermediate objects as needed.
pub fn set_pointer(doc: &mut Value, pointer: &str, value: Value) -> Result<()> {
    let tokens: Vec<String> = pointer
        .split('/')
        .skip(1)
        .map(|t| t.replace("~1", "/").replace("~0", "~"))
        .collect();
    let conflict = || AppError::Config {
        pointer: pointer.to_string(),
        message: "override path runs through a non-object value".into(),
    };
    let (last, parents) = tokens.split_last().ok_or_else(conflict)?;
    let mut node = doc;
    for t in parents {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        node = match node {
            Value::Object(map) => map.entry(t.clone()).or_insert(Value::Null),
            Value::Array(items) => t.parse::<usize>().ok().and_then(|i| items.get_mut(i)).ok_or_else(conflict)?,
            _ => return Err(conflict()),
        };
    }
    if node.is_null() {
        *node = Value::Object(Default::default());
    }
    match node {
        Value::Object(map) => {
            map.insert(last.clone(), value);
        }
        Value::Array(items) => {
            let slot = last.parse::<usize>().ok().and_then(|i| items.get_mut(i)).ok_or_else(conflict)?;
            *slot = value;
        }
        _ => return Err(conflict()),
    }
    Ok(())
}

fn escape(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

/// Field name in serde's "missing field `x`" message. The path of other
/// errors already ends at the offending field.
fn missing_field(message: &str) -> Option<&str> {
    message.strip_prefix("missing field `")?.split('`').next()
}

/// Deserialize a resolved document, reporting failures as JSON pointers.
pub fn from_value(doc: Value) -> Result<ExperimentConfig> {
    serde_path_to_error::deserialize(doc).map_err(|err| {
        let mut pointer = String::new();
        for seg in err.path().iter() {
            use serde_path_to_error::Segment;
            match seg {
                Segment::Seq { index } => pointer.push_str(&format!("/{index}")),
                Segment::Map { key } => pointer.push_str(&format!("/{}", escape(key))),
                Segment::Enum { variant } => pointer.push_str(&format!("/{}", escape(variant))),
                Segment::Unknown => pointer.push_str("/?"),
            }
        }
        let message = err.inner().to_string();
        if let Some(field) = missing_field(&message) {
            pointer.push_str(&format!("/{}", escape(field)));
        }
        if pointer.is_empty() {
            pointer.push('/');
        }
        AppError::Config { pointer, message }
    })
}

/// Read `path`, apply overrides, deserialize, resolve relative paths and
/// validate.
pub fn load(path: &Path, overrides: &[(String, Value)]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|source| AppError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    for (pointer, value) in overrides {
        set_pointer(&mut doc, pointer, value.clone())?;
    }
    let mut cfg = from_value(doc)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    cfg.validate()?;
    Ok(cfg)
}
