//! Per-column z-scoring with statistics from the training split.

use std::collections::BTreeMap;

use fut_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::timeseries::TimeSeriesTable;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub columns: BTreeMap<String, ColumnStats>,
}

impl NormStats {
    pub fn fit(table: &TimeSeriesTable) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::Data("cannot compute normalization statistics of an empty table".into()));
        }
        let n = table.len() as f64;
        let mut columns = BTreeMap::new();
        for (name, values) in &table.columns {
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if !(std > 0.0 && std.is_finite()) {
                return Err(Error::Config(format!(
                    "column `{name}` has zero variance in the training split and cannot be standardized"
                )));
            }
            columns.insert(name.clone(), ColumnStats { mean, std });
        }
        Ok(NormStats { columns })
    }

    fn stats(&self, column: &str) -> Result<ColumnStats> {
        self.columns
            .get(column)
            .copied()
            .ok_or_else(|| Error::Schema(format!("no normalization statistics for column `{column}`")))
    }

    fn map(&self, table: &TimeSeriesTable, f: impl Fn(f64, ColumnStats) -> f64) -> Result<TimeSeriesTable> {
        let mut out = table.clone();
        for (name, values) in &mut out.columns {
            let s = self.stats(name)?;
            values.iter_mut().for_each(|v| *v = f(*v, s));
        }
        Ok(out)
    }

    pub fn apply(&self, table: &TimeSeriesTable) -> Result<TimeSeriesTable> {
        self.map(table, |v, s| (v - s.mean) / s.std)
    }

    pub fn inverse(&self, table: &TimeSeriesTable) -> Result<TimeSeriesTable> {
        self.map(table, |v, s| v * s.std + s.mean)
    }

    /// Maps standardized values of `column` back to raw units.
    pub fn inverse_value(&self, column: &str, value: f64) -> Result<f64> {
        let s = self.stats(column)?;
        Ok(value * s.std + s.mean)
    }
}

/// Standardizes all three splits with statistics of `train` alone.
pub fn normalize(
    train: &TimeSeriesTable,
    val: &TimeSeriesTable,
    test: &TimeSeriesTable,
) -> Result<([TimeSeriesTable; 3], NormStats)> {
    let stats = NormStats::fit(train)?;
    Ok(([stats.apply(train)?, stats.apply(val)?, stats.apply(test)?], stats))
}
