//! Trained model plus the preprocessing needed to use it on raw tables.

use std::path::Path;

use plmcmc_core::data::{double_attributes, Dataset, WhiteningStats};
use plmcmc_core::FlowModel;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::io::{read_json, write_json};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    /// Statistics of the original (undoubled) columns.
    pub whitening: Option<WhiteningStats>,
    /// Columns were copied once to reach an even width.
    pub doubled: bool,
}

impl Preprocessing {
    /// Whiten, then double, a table in data coordinates.
    pub fn to_model_space(&self, data: &Dataset) -> Result<Dataset> {
        let mut out = data.clone();
        if let Some(stats) = &self.whitening {
            if stats.mean.len() != data.cols() {
                return Err(AppError::usage(format!(
                    "model expects {} columns, table has {}",
                    stats.mean.len(),
                    data.cols()
                )));
            }
            for i in 0..out.rows() {
                stats.whiten_row(out.row_mut(i));
            }
            out.clear_missing();
        }
        Ok(if self.doubled { double_attributes(&out) } else { out })
    }

    /// Inverse of [`Self::to_model_space`]. Missing cells keep their
    /// (imputed) payloads. Of the two copies of a doubled column the first
    /// one is kept.
    pub fn to_data_space(&self, data: &Dataset) -> Result<Dataset> {
        let cols = if self.doubled { data.cols() / 2 } else { data.cols() };
        let mut values = Vec::with_capacity(data.rows() * cols);
        let mut missing = Vec::with_capacity(data.rows() * cols);
        for i in 0..data.rows() {
            let mut row = data.row(i)[..cols].to_vec();
            if let Some(stats) = &self.whitening {
                stats.unwhiten_row(&mut row);
            }
            values.extend(row);
            missing.extend_from_slice(&data.row_missing(i)[..cols]);
        }
        Ok(Dataset::new(cols, values, missing)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub columns: Vec<String>,
    pub preprocessing: Preprocessing,
    pub flow: FlowModel,
}

impl ModelDocument {
    pub fn new(columns: Vec<String>, preprocessing: Preprocessing, flow: FlowModel) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            columns,
            preprocessing,
            flow,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc: Self = read_json(path)?;
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(AppError::usage(format!(
                "{}: unsupported model schema version {}",
                path.display(),
                doc.schema_version
            )));
        }
        let width = doc.columns.len() * if doc.preprocessing.doubled { 2 } else { 1 };
        if width != doc.flow.dim() {
            return Err(AppError::usage(format!(
                "{}: {} columns do not match flow dimension {}",
                path.display(),
                doc.columns.len(),
                doc.flow.dim()
            )));
        }
        Ok(doc)
    }

    /// Convert a table to model coordinates after checking its header.
    pub fn to_model_space(&self, columns: &[String], data: &Dataset) -> Result<Dataset> {
        if columns != self.columns.as_slice() {
            return Err(AppError::usage(format!(
                "table columns {columns:?} do not match model columns {:?}",
                self.columns
            )));
        }
        self.preprocessing.to_model_space(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use plmcmc_core::data::whiten;
    use plmcmc_core::{FlowArch, PriorKind};

    #[test]
    fn preprocessing_round_trips() {
        let d = Dataset::new(3, vec![1.0, 5.0, -2.0, 3.0, 0.0, 4.0, 2.0, 7.0, 1.0], vec![false, false, false, false, true, false, false, false, false]).unwrap();
        let (_, stats) = whiten(&d).unwrap();
        let pre = Preprocessing {
            whitening: Some(stats),
            doubled: true,
        };
        let mut model_space = pre.to_model_space(&d).unwrap();
        assert_eq!(model_space.cols(), 6);
        assert_eq!(model_space.row_missing(1), &[false, true, false, false, true, false]);
        model_space.row_mut(1)[1] = 0.5;
        let back = pre.to_data_space(&model_space).unwrap();
        assert!((back.row(1)[1] - (pre.whitening.as_ref().unwrap().mean[1] + 0.5 * pre.whitening.as_ref().unwrap().std[1])).abs() < 1e-12);
        for ((a, b), &m) in back.values().iter().zip(d.values()).zip(d.missing()) {
            if !m {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!(back.missing(), d.missing());
    }

    #[test]
    fn documents_round_trip_and_validate() {
        let arch = FlowArch {
            coupling_layers: 2,
            hidden_layers: 1,
            hidden_width: 4,
            prior: PriorKind::Logistic,
        };
        let flow = FlowModel::new(4, &arch, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let doc = ModelDocument::new(vec!["a".into(), "b".into()], Preprocessing { whitening: None, doubled: true }, flow);
        doc.save(&path).unwrap();
        assert_eq!(ModelDocument::load(&path).unwrap(), doc);

        let bad = ModelDocument::new(vec!["a".into()], Preprocessing::default(), doc.flow.clone());
        bad.save(&path).unwrap();
        assert!(ModelDocument::load(&path).is_err());
    }
}
