//! Hourly time-series tables in the Beijing PM2.5 CSV layout.

use std::collections::BTreeMap;
use std::io;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use fut_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DATE_COLUMNS: [&str; 4] = ["year", "month", "day", "hour"];
/// Value columns kept by ingestion. Anything else in the file is ignored.
pub const VALUE_COLUMNS: [&str; 6] = ["pm2.5", "DEWP", "TEMP", "PRES", "Iws", "Ir"];
pub const FEATURE_COLUMNS: [&str; 4] = ["TEMP", "DEWP", "PRES", "Iws"];
pub const TARGET_COLUMNS: [&str; 2] = ["pm2.5", "Ir"];

/// Named float columns over strictly increasing hourly timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesTable {
    /// Hours since 1970-01-01T00.
    pub timestamps: Vec<i64>,
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl TimeSeriesTable {
    pub fn new(timestamps: Vec<i64>, columns: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        for (name, values) in &columns {
            if values.len() != timestamps.len() {
                return Err(Error::Data(format!(
                    "column `{name}` has {} values for {} timestamps",
                    values.len(),
                    timestamps.len()
                )));
            }
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!("timestamps not increasing at row {}", i + 1)));
        }
        Ok(TimeSeriesTable { timestamps, columns })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Schema(format!("table has no column `{name}`")))
    }

    pub fn slice(&self, rows: Range<usize>) -> TimeSeriesTable {
        TimeSeriesTable {
            timestamps: self.timestamps[rows.clone()].to_vec(),
            columns: self
                .columns
                .iter()
                .map(|(k, v)| (k.clone(), v[rows.clone()].to_vec()))
                .collect(),
        }
    }
}

/// A row whose missing cells were filled from the previous row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairedRow {
    /// 1-based line in the file, header included.
    pub line: usize,
    pub columns: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    /// Rows before the first one where every value column has been seen.
    pub leading_dropped: usize,
    pub repaired: Vec<RepairedRow>,
    /// Steps between consecutive rows longer than one hour.
    pub gaps: usize,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

fn parse_int(cell: &str, line: usize, column: &str) -> Result<i64> {
    let bad = || Error::Data(format!("line {line}: `{column}` value `{cell}` is not an integer"));
    if let Ok(v) = cell.parse::<i64>() {
        return Ok(v);
    }
    let v: f64 = cell.parse().map_err(|_| bad())?;
    if v.fract() == 0.0 && v.is_finite() {
        Ok(v as i64)
    } else {
        Err(bad())
    }
}

fn timestamp(parts: [i64; 4], line: usize) -> Result<i64> {
    let [y, m, d, h] = parts;
    let date = NaiveDate::from_ymd_opt(y as i32, m as u32, d as u32)
        .filter(|_| (0..24).contains(&h))
        .ok_or_else(|| Error::Data(format!("line {line}: invalid date {y}-{m}-{d} hour {h}")))?;
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
    Ok((date - epoch).num_days() * 24 + h)
}

/// Reads a Beijing-layout CSV. Extra columns are ignored; a missing required
/// column is a schema error. Missing values (empty, `NA`) are forward-filled
/// and rows before the first complete one are dropped.
pub fn read_timeseries(reader: impl io::Read) -> Result<(TimeSeriesTable, IngestReport)> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv
        .headers()
        .map_err(|e| Error::Data(format!("cannot read CSV header: {e}")))?
        .clone();
    let position = |name: &str| header.iter().position(|h| h == name);
    let missing: Vec<&str> = DATE_COLUMNS
        .iter()
        .chain(&VALUE_COLUMNS)
        .copied()
        .filter(|c| position(c).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!("CSV lacks required column(s): {}", missing.join(", "))));
    }
    let date_idx = DATE_COLUMNS.map(|c| position(c).expect("checked"));
    let value_idx = VALUE_COLUMNS.map(|c| position(c).expect("checked"));

    let mut report = IngestReport::default();
    let mut timestamps = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); VALUE_COLUMNS.len()];
    let mut last: [Option<f64>; 6] = [None; 6];
    let mut prev_ts: Option<i64> = None;

    for (row, record) in csv.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        report.rows_read += 1;
        let mut parts = [0i64; 4];
        for (part, (&idx, name)) in parts.iter_mut().zip(date_idx.iter().zip(DATE_COLUMNS)) {
            *part = parse_int(record.get(idx).unwrap_or(""), line, name)?;
        }
        let ts = timestamp(parts, line)?;
        if let Some(prev) = prev_ts {
            if ts <= prev {
                return Err(Error::Data(format!(
                    "row {} (line {line}): timestamp does not follow the previous row",
                    row + 1
                )));
            }
        }
        prev_ts = Some(ts);

        let mut filled = Vec::new();
        let mut values = [0.0; 6];
        for (c, &idx) in value_idx.iter().enumerate() {
            let cell = record.get(idx).unwrap_or("");
            if is_missing(cell) {
                filled.push(c);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Data(format!("line {line}: `{}` value `{cell}` is not a number", VALUE_COLUMNS[c]))
                })?;
                last[c] = Some(v);
                values[c] = v;
            }
        }
        if last.iter().any(Option::is_none) {
            report.leading_dropped += 1;
            continue;
        }
        for &c in &filled {
            values[c] = last[c].expect("seen");
        }
        if !filled.is_empty() {
            report.repaired.push(RepairedRow {
                line,
                columns: filled.iter().map(|&c| VALUE_COLUMNS[c].to_string()).collect(),
            });
        }
        if timestamps.last().is_some_and(|&t| ts - t > 1) {
            report.gaps += 1;
        }
        timestamps.push(ts);
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(v);
        }
    }
    report.rows_kept = timestamps.len();
    let columns = VALUE_COLUMNS.iter().map(|c| c.to_string()).zip(columns).collect();
    Ok((TimeSeriesTable::new(timestamps, columns)?, report))
}

pub fn ingest_timeseries_csv(path: impl AsRef<Path>) -> Result<(TimeSeriesTable, IngestReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_timeseries(io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "No,year,month,day,hour,pm2.5,DEWP,TEMP,PRES,cbwd,Iws,Is,Ir\n";

    fn read(body: &str) -> Result<(TimeSeriesTable, IngestReport)> {
        read_timeseries(format!("{HEADER}{body}").as_bytes())
    }

    #[test]
    fn complete_rows_parse_as_floats() {
        let (t, r) = read(
            "1,2010,1,1,0,129,-16,-4,1020,SE,1.79,0,0\n\
             2,2010,1,1,1,148,-15,-4,1020,SE,2.68,0,0\n\
             3,2010,1,1,2,159,-11,-5,1021,SE,3.57,0,1\n",
        )
        .unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.column("pm2.5").unwrap(), &[129.0, 148.0, 159.0]);
        assert_eq!(t.column("Ir").unwrap(), &[0.0, 0.0, 1.0]);
        assert_eq!(t.timestamps[1] - t.timestamps[0], 1);
        assert_eq!(r.rows_kept, 3);
        assert!(r.repaired.is_empty());
        assert!(t.column("cbwd").is_err());
    }

    #[test]
    fn missing_cells_are_forward_filled_and_reported() {
        let (t, r) = read(
            "1,2010,1,1,0,NA,-21,-11,1021,NW,1.79,0,0\n\
             2,2010,1,1,1,129,-16,-4,1020,SE,1.79,0,0\n\
             3,2010,1,1,2,,-15,-4,1020,SE,2.68,0,0\n\
             4,2010,1,1,3,159,-11,-5,1021,SE,3.57,0,0\n",
        )
        .unwrap();
        assert_eq!(r.leading_dropped, 1);
        assert_eq!(t.column("pm2.5").unwrap(), &[129.0, 129.0, 159.0]);
        assert_eq!(
            r.repaired,
            vec![RepairedRow {
                line: 4,
                columns: vec!["pm2.5".into()]
            }]
        );
    }

    #[test]
    fn out_of_order_rows_name_the_first_offender() {
        let err = read(
            "1,2010,1,1,0,1,1,1,1,SE,1,0,0\n\
             2,2010,1,1,2,1,1,1,1,SE,1,0,0\n\
             3,2010,1,1,1,1,1,1,1,SE,1,0,0\n\
             4,2010,1,1,0,1,1,1,1,SE,1,0,0\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn missing_required_column_is_schema_error() {
        let err = read_timeseries("year,month,day,hour,pm2.5\n2010,1,1,0,3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(err.to_string().contains("DEWP"));
    }

    #[test]
    fn gaps_are_counted() {
        let (t, r) = read(
            "1,2010,1,1,0,1,1,1,1,SE,1,0,0\n\
             2,2010,1,1,3,1,1,1,1,SE,1,0,0\n",
        )
        .unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(r.gaps, 1);
    }

    #[test]
    fn bad_numbers_are_data_errors() {
        assert!(matches!(read("1,2010,1,1,0,x,1,1,1,SE,1,0,0\n"), Err(Error::Data(_))));
        assert!(matches!(read("1,2010,13,1,0,1,1,1,1,SE,1,0,0\n"), Err(Error::Data(_))));
    }
}
