//! Sliding windows over a time-series table.

use fut_core::{Error, Result, Tensor};

use crate::timeseries::{TimeSeriesTable, FEATURE_COLUMNS, TARGET_COLUMNS};

#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    /// Row index of the first input hour in the source table.
    pub start: usize,
    /// `(s_in, x_cols)`
    pub x: Tensor<f64>,
    /// `(s_out, y_cols)`, the hours right after `x`.
    pub y: Tensor<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowSpec {
    pub s_in: usize,
    pub s_out: usize,
    pub x_cols: Vec<String>,
    pub y_cols: Vec<String>,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            s_in: 24,
            s_out: 1,
            x_cols: FEATURE_COLUMNS.iter().map(|c| c.to_string()).collect(),
            y_cols: TARGET_COLUMNS.iter().map(|c| c.to_string()).collect(),
        }
    }
}

fn gather(table: &TimeSeriesTable, cols: &[String], rows: std::ops::Range<usize>) -> Result<Tensor<f64>> {
    let series: Vec<&[f64]> = cols.iter().map(|c| table.column(c)).collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(rows.len() * cols.len());
    for r in rows.clone() {
        data.extend(series.iter().map(|s| s[r]));
    }
    Tensor::new([rows.len(), cols.len()], data)
}

/// One sample per start index with stride 1. Windows that would span a gap
/// in the hourly timestamps are skipped, so a gap-free table of `N` rows
/// gives `N - s_in - s_out + 1` windows.
pub fn make_windows(table: &TimeSeriesTable, spec: &WindowSpec) -> Result<Vec<WindowSample>> {
    if spec.s_in == 0 || spec.s_out == 0 || spec.x_cols.is_empty() || spec.y_cols.is_empty() {
        return Err(Error::Config("windows need s_in, s_out ≥ 1 and at least one x and y column".into()));
    }
    let span = spec.s_in + spec.s_out;
    if table.len() < span {
        return Err(Error::Data(format!(
            "table has {} rows, fewer than s_in + s_out = {span}",
            table.len()
        )));
    }
    let ts = &table.timestamps;
    let mut out = Vec::with_capacity(table.len() - span + 1);
    for start in 0..=table.len() - span {
        if ts[start + span - 1] - ts[start] != span as i64 - 1 {
            continue;
        }
        out.push(WindowSample {
            start,
            x: gather(table, &spec.x_cols, start..start + spec.s_in)?,
            y: gather(table, &spec.y_cols, start + spec.s_in..start + span)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::timeseries::VALUE_COLUMNS;

    pub(crate) fn ramp(n: usize) -> TimeSeriesTable {
        let columns: BTreeMap<String, Vec<f64>> = VALUE_COLUMNS
            .iter()
            .enumerate()
            .map(|(c, name)| (name.to_string(), (0..n).map(|r| (r * 10 + c) as f64).collect()))
            .collect();
        TimeSeriesTable::new((0..n as i64).collect(), columns).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&ramp(25), &WindowSpec::default()).unwrap().len(), 1);
        assert_eq!(make_windows(&ramp(100), &WindowSpec::default()).unwrap().len(), 76);
        assert!(matches!(make_windows(&ramp(24), &WindowSpec::default()), Err(Error::Data(_))));
    }

    #[test]
    fn windows_reproduce_the_source_rows() {
        let table = ramp(40);
        let spec = WindowSpec::default();
        for w in make_windows(&table, &spec).unwrap() {
            assert_eq!(w.x.dims(), &[24, 4]);
            assert_eq!(w.y.dims(), &[1, 2]);
            for (r, row) in w.x.data().chunks(4).enumerate() {
                for (c, col) in spec.x_cols.iter().enumerate() {
                    assert_eq!(row[c], table.column(col).unwrap()[w.start + r]);
                }
            }
            let next = w.start + 24;
            assert_eq!(w.y.data(), &[table.column("pm2.5").unwrap()[next], table.column("Ir").unwrap()[next]]);
        }
    }

    #[test]
    fn windows_do_not_span_gaps() {
        let mut table = ramp(30);
        for t in &mut table.timestamps[10..] {
            *t += 5;
        }
        let spec = WindowSpec {
            s_in: 3,
            s_out: 1,
            ..WindowSpec::default()
        };
        let windows = make_windows(&table, &spec).unwrap();
        // 10 rows before the gap give 7 windows, 20 after give 17
        assert_eq!(windows.len(), 7 + 17);
        assert!(windows.iter().all(|w| w.start + 4 <= 10 || w.start >= 10));
    }
}
