//! `plmcmc train`: Monte Carlo EM on an incomplete table.

use std::path::{Path, PathBuf};

use clap::Args;
use plmcmc_core::data::{apply_mask, duplicate_dataset, Dataset, WhiteningStats};
use plmcmc_core::exec::Executor;
use plmcmc_core::mcem::{mcem_train, multi_chain_impute, EpochRecord, ImputedDataset, McemObserver, Scoring};
use plmcmc_core::metrics::{column_std, mean_fill, nmse, reconstruction_rmse};
use plmcmc_core::FlowModel;

use super::num;
use crate::config::{self, Doubling, ExperimentConfig};
use crate::error::{AppError, Result};
use crate::io::{load_csv, write_filled, write_json, write_mask, write_rows, write_table, Table};
use crate::model_file::{ModelDocument, Preprocessing};
use crate::report::{write_metrics, MetricReport};

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Experiment configuration (JSON).
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    /// Override a config value, e.g. `--set /mcem/total_epochs=300`.
    #[arg(long = "set", value_name = "POINTER=JSON")]
    pub overrides: Vec<String>,
    /// Shortcut for `--set /seed=N`
    #[arg(long)]
    pub seed: Option<u64>,
    /// Shortcut for `--set /mcem/total_epochs=N`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub dry_run: bool,
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut overrides = self
            .overrides
            .iter()
            .map(|s| config::parse_override(s))
            .collect::<Result<Vec<_>>>()?;
        if let Some(seed) = self.seed {
            overrides.push(("/seed".into(), seed.into()));
        }
        if let Some(epochs) = self.epochs {
            overrides.push(("/mcem/total_epochs".into(), epochs.into()));
        }
        config::load(&self.config, &overrides)
    }
}

/// Masked training table, ground truth when known, and the preprocessing
/// that maps it to model coordinates.
pub struct Prepared {
    pub columns: Vec<String>,
    pub masked: Dataset,
    pub truth: Option<Dataset>,
    pub preprocessing: Preprocessing,
    /// Masked rows in model coordinates, not duplicated.
    pub model_data: Dataset,
}

fn with_grid(table: Table, grid: Option<[usize; 2]>) -> Result<Table> {
    Ok(match grid {
        Some([h, w]) => Table {
            data: table.data.with_grid(h, w)?,
            ..table
        },
        None => table,
    })
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let table = with_grid(load_csv(&cfg.dataset.path)?, cfg.dataset.grid)?;
    let (masked, truth) = match &cfg.mask {
        Some(spec) => {
            if table.data.missing_count() > 0 {
                return Err(AppError::usage(format!(
                    "{}: a mask can only be applied to a complete table",
                    cfg.dataset.path.display()
                )));
            }
            (apply_mask(&table.data, spec)?, Some(table.data.clone()))
        }
        None => {
            let truth = match &cfg.dataset.truth {
                Some(path) => {
                    let t = load_csv(path)?;
                    if t.columns != table.columns || t.data.rows() != table.data.rows() || t.data.missing_count() > 0 {
                        return Err(AppError::usage(format!(
                            "{}: truth must be a complete table with the same header and row count",
                            path.display()
                        )));
                    }
                    Some(t.data)
                }
                None => None,
            };
            (table.data.clone(), truth)
        }
    };
    let doubled = match cfg.dataset.double_attributes {
        Doubling::Auto => masked.cols() % 2 == 1,
        Doubling::Always => true,
        Doubling::Never => false,
    };
    let whitening = if cfg.dataset.whiten {
        Some(WhiteningStats::from_observed(&masked)?)
    } else {
        None
    };
    let preprocessing = Preprocessing { whitening, doubled };
    let model_data = preprocessing.to_model_space(&masked)?;
    Ok(Prepared {
        columns: table.columns,
        masked,
        truth,
        preprocessing,
        model_data,
    })
}

/// Writes a model and data-space imputation at each re-imputation.
struct CheckpointWriter<'a> {
    dir: PathBuf,
    prepared: &'a Prepared,
    error: Option<AppError>,
}

impl CheckpointWriter<'_> {
    fn write(&self, epoch: usize, model: &FlowModel, data: &ImputedDataset) -> Result<()> {
        let dir = self.dir.join(format!("{epoch:05}"));
        let doc = ModelDocument::new(self.prepared.columns.clone(), self.prepared.preprocessing.clone(), model.clone());
        doc.save(&dir.join("model.json"))?;
        let imputed = self.prepared.preprocessing.to_data_space(&data.data)?;
        write_filled(&dir.join("imputed.csv"), &self.prepared.columns, &imputed)
    }
}

impl McemObserver for CheckpointWriter<'_> {
    fn on_epoch(&mut self, record: &EpochRecord) {
        if record.epoch % 50 == 0 {
            log::info!("epoch {} mean nll {:.5}", record.epoch, record.mean_nll);
        }
    }

    fn on_resample(&mut self, epoch: usize, model: &FlowModel, data: &ImputedDataset) {
        if self.error.is_none() {
            if let Err(e) = self.write(epoch, model, data) {
                self.error = Some(e);
            }
        }
        log::info!("re-imputed training set before epoch {epoch}");
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub metrics: Vec<MetricReport>,
    pub aborted: bool,
}

/// Run the whole experiment and write every artifact under `out`.
pub fn run<E: Executor>(cfg: &ExperimentConfig, out: &Path, exec: &E) -> Result<TrainSummary> {
    let digest = cfg.digest();
    write_json(&out.join("resolved_config.json"), cfg)?;
    let prepared = prepare(cfg)?;
    write_mask(&out.join("mask.csv"), &prepared.columns, &prepared.masked)?;

    let train_data = duplicate_dataset(&prepared.model_data, cfg.dataset.duplicate)?;
    let scoring = match &prepared.truth {
        Some(truth) => {
            let t = prepared.preprocessing.to_model_space(truth)?;
            let t = duplicate_dataset(&t, cfg.dataset.duplicate)?;
            let sigmas = column_std(t.values(), t.cols())?;
            Some(Scoring {
                truth: t.values().to_vec(),
                sigmas,
            })
        }
        None => None,
    };
    let mcem = cfg.mcem();
    let model = FlowModel::new(train_data.cols(), &cfg.flow.arch(), cfg.seed)?;
    let mut writer = CheckpointWriter {
        dir: out.join("ckpt"),
        prepared: &prepared,
        error: None,
    };
    let outcome = mcem_train(model, &train_data, &mcem, cfg.seed, scoring.as_ref(), exec, &mut writer)?;
    if let Some(e) = writer.error {
        return Err(e);
    }
    write_rows(
        &out.join("history.csv"),
        &["epoch", "mean_nll", "nmse"],
        outcome.history.iter().map(|r| vec![r.epoch.to_string(), num(r.mean_nll), r.nmse.map(num).unwrap_or_default()]),
    )?;
    let doc = ModelDocument::new(prepared.columns.clone(), prepared.preprocessing.clone(), outcome.model);
    doc.save(&out.join("model.json"))?;

    // Final imputation of the undoubled, unduplicated rows.
    let range = prepared.model_data.observed_range()?;
    let imputed = multi_chain_impute(
        &doc.flow,
        &prepared.model_data,
        &mcem.sampler_at(mcem.total_epochs),
        cfg.evaluation.chains,
        mcem.clamp.then_some(range.as_slice()),
        cfg.seed,
        mcem.total_epochs as u64,
        exec,
    )?;
    let avg = prepared.preprocessing.to_data_space(&imputed.average)?;
    let ind = prepared.preprocessing.to_data_space(&imputed.individual)?;
    write_filled(&out.join("imputed.csv"), &prepared.columns, &avg)?;
    write_filled(&out.join("imputed_ind.csv"), &prepared.columns, &ind)?;
    write_table(&out.join("masked.csv"), &prepared.columns, &prepared.masked)?;

    let mut metrics = Vec::new();
    if let Some(last) = outcome.history.last() {
        metrics.push(MetricReport::new("final_mean_nll", last.mean_nll, train_data.rows(), &digest));
    }
    if outcome.aborted.is_some() {
        metrics.push(MetricReport::new("aborted_at_epoch", outcome.history.len() as f64, 0, &digest));
    }
    if let Some(truth) = &prepared.truth {
        let cols = truth.cols();
        let missing = prepared.masked.missing();
        let n = prepared.masked.missing_count();
        let sigmas = column_std(truth.values(), cols)?;
        let mean = mean_fill(prepared.masked.values(), missing, cols)?;
        metrics.push(MetricReport::new("nmse_avg", nmse(avg.values(), truth.values(), missing, cols, &sigmas)?, n, &digest));
        metrics.push(MetricReport::new("nmse_ind", nmse(ind.values(), truth.values(), missing, cols, &sigmas)?, n, &digest));
        metrics.push(MetricReport::new("nmse_mean_imputation", nmse(&mean, truth.values(), missing, cols, &sigmas)?, n, &digest));
        metrics.push(MetricReport::new("rmse_avg", reconstruction_rmse(avg.values(), truth.values(), missing, cols)?, n, &digest));
    }
    write_metrics(&out.join("metrics.json"), &metrics)?;
    Ok(TrainSummary {
        metrics,
        aborted: outcome.aborted.is_some(),
    })
}
