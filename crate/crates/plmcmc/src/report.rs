use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::write_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    /// Number of scored cells.
    pub n_examples: usize,
    pub config_digest: String,
}

impl MetricReport {
    pub fn new(metric: &str, value: f64, n_examples: usize, config_digest: &str) -> Self {
        Self {
            metric: metric.to_string(),
            value,
            n_examples,
            config_digest: config_digest.to_string(),
        }
    }
}

pub fn write_metrics(path: &Path, reports: &[MetricReport]) -> Result<()> {
    write_json(path, &reports)
}

/// Value of `metric` in a metrics file written by [`write_metrics`].
pub fn find_metric(reports: &[MetricReport], metric: &str) -> Option<f64> {
    reports.iter().find(|r| r.metric == metric).map(|r| r.value)
}
