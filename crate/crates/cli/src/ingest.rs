//! Reading raw intraday price files in long (`date,time,price`) or wide
//! (`date,<time>...`) layout, and writing the canonical wide file.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use serde::Serialize;

use intraday_fts_core::gridcurves::{
    cidr_transform, clean_raw_days, CleanReport, DropReason, FunctionalTimeSeries, IntradayGrid, PriceMatrix,
};

use crate::config::InputFormat;
use crate::error::{CliError, Result};

/// Prices as read, before cleaning: one row per date, one column per time.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPanel {
    pub dates: Vec<String>,
    pub time_labels: Vec<String>,
    /// Minutes since the first time label.
    pub minutes: Vec<u32>,
    pub rows: Vec<Vec<Option<f64>>>,
}

/// Cleaned prices and their provenance.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dates: Vec<String>,
    pub time_labels: Vec<String>,
    pub prices: PriceMatrix,
    pub report: CleanReport,
    pub raw_dates: Vec<String>,
}

impl Dataset {
    pub fn curves(&self) -> FunctionalTimeSeries {
        cidr_transform(&self.prices)
    }

    pub fn tau(&self) -> usize {
        self.time_labels.len()
    }
}

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    t.is_empty()
        || ["na", "nan", "null", "-", "n/a"]
            .iter()
            .any(|m| t.eq_ignore_ascii_case(m))
}

/// Parses `HH:MM`, `HH:MM:SS` or a plain minute count into seconds.
pub fn parse_time(label: &str) -> Option<u32> {
    let parts: Vec<&str> = label.trim().split(':').collect();
    let nums: Option<Vec<u32>> = parts.iter().map(|p| p.parse::<u32>().ok()).collect();
    match nums?.as_slice() {
        [m] => Some(m * 60),
        [h, m] if *m < 60 => Some(h * 3600 + m * 60),
        [h, m, s] if *m < 60 && *s < 60 => Some(h * 3600 + m * 60 + s),
        _ => None,
    }
}

fn parse_price(path: &Path, line: u64, field: &str) -> Result<Option<f64>> {
    if is_missing(field) {
        return Ok(None);
    }
    let v: f64 = field.trim().parse().map_err(|_| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("invalid price '{}'", field.trim()),
    })?;
    if !(v.is_finite() && v > 0.0) {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("price must be positive and finite, got {v}"),
        });
    }
    Ok(Some(v))
}

fn minutes_from_seconds(path: &Path, seconds: &[u32]) -> Result<Vec<u32>> {
    if seconds.iter().any(|s| s % 60 != 0) {
        return Err(CliError::data(path, "sub-minute sampling times are not supported"));
    }
    let first = seconds.first().copied().unwrap_or(0);
    Ok(seconds.iter().map(|s| (s - first) / 60).collect())
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

fn detect(path: &Path) -> Result<InputFormat> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    let names: Vec<String> = headers.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if names.len() == 3 && names[0] == "date" && names[1] == "time" && names[2] == "price" {
        Ok(InputFormat::Long)
    } else if names.len() >= 4 && names[0] == "date" {
        Ok(InputFormat::Wide)
    } else {
        Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "unrecognized header: expected `date,time,price` or `date,<time>,<time>,...`".into(),
        })
    }
}

pub fn read_raw(path: &Path, format: InputFormat) -> Result<RawPanel> {
    let format = match format {
        InputFormat::Auto => detect(path)?,
        f => f,
    };
    match format {
        InputFormat::Long => read_long(path),
        _ => read_wide(path),
    }
}

pub fn read_wide(path: &Path) -> Result<RawPanel> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    let time_labels: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut seconds = Vec::with_capacity(time_labels.len());
    for label in &time_labels {
        seconds.push(parse_time(label).ok_or_else(|| CliError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("invalid time label '{label}'"),
        })?);
    }
    if seconds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "time columns must be strictly increasing".into(),
        });
    }
    let minutes = minutes_from_seconds(path, &seconds)?;
    let mut dates = Vec::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != time_labels.len() + 1 {
            return Err(CliError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", time_labels.len() + 1, record.len()),
            });
        }
        dates.push(record[0].trim().to_string());
        let row = record
            .iter()
            .skip(1)
            .map(|f| parse_price(path, line, f))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(RawPanel {
        dates,
        time_labels,
        minutes,
        rows,
    })
}

pub fn read_long(path: &Path) -> Result<RawPanel> {
    let mut reader = open_reader(path)?;
    let mut entries: Vec<(usize, u32, Option<f64>, u64)> = Vec::new();
    let mut dates: Vec<String> = Vec::new();
    let mut date_index: HashMap<String, usize> = HashMap::new();
    let mut labels: HashMap<u32, String> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(CliError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected 3 fields (date,time,price), found {}", record.len()),
            });
        }
        let date = record[0].trim().to_string();
        let time = parse_time(&record[1]).ok_or_else(|| CliError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("invalid time '{}'", record[1].trim()),
        })?;
        let price = parse_price(path, line, &record[2])?;
        let d = *date_index.entry(date.clone()).or_insert_with(|| {
            dates.push(date);
            dates.len() - 1
        });
        labels.entry(time).or_insert_with(|| record[1].trim().to_string());
        entries.push((d, time, price, line));
    }
    let mut times: Vec<u32> = labels.keys().copied().collect();
    times.sort_unstable();
    let col: HashMap<u32, usize> = times.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut rows = vec![vec![None; times.len()]; dates.len()];
    let mut seen = vec![vec![false; times.len()]; dates.len()];
    for (d, t, price, line) in entries {
        let c = col[&t];
        if seen[d][c] {
            return Err(CliError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate entry for {} at {}", dates[d], labels[&t]),
            });
        }
        seen[d][c] = true;
        rows[d][c] = price;
    }
    Ok(RawPanel {
        dates,
        time_labels: times.iter().map(|t| labels[t].clone()).collect(),
        minutes: minutes_from_seconds(path, &times)?,
        rows,
    })
}

/// Reads, drops unusable days and interpolates interior gaps.
pub fn load_dataset(path: &Path, format: InputFormat, max_missing_fraction: f64) -> Result<Dataset> {
    let raw = read_raw(path, format)?;
    let grid = IntradayGrid::new(raw.minutes.clone()).map_err(|e| CliError::data(path, e.to_string()))?;
    let (prices, report) =
        clean_raw_days(&grid, &raw.rows, max_missing_fraction).map_err(|e| CliError::data(path, e.to_string()))?;
    if report.kept.is_empty() {
        return Err(CliError::data(path, "no usable trading days after cleaning"));
    }
    Ok(Dataset {
        dates: report.kept.iter().map(|&d| raw.dates[d].clone()).collect(),
        time_labels: raw.time_labels,
        prices,
        report,
        raw_dates: raw.dates,
    })
}

pub fn write_wide(path: &Path, dates: &[String], time_labels: &[String], prices: &PriceMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::data(path, format!("{other:?}")),
    })?;
    let mut header = vec!["date".to_string()];
    header.extend(time_labels.iter().cloned());
    w.write_record(&header)?;
    let p = prices.prices();
    for (t, date) in dates.iter().enumerate() {
        let mut rec = vec![date.clone()];
        rec.extend((0..p.ncols()).map(|i| p[(t, i)].to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DroppedDay {
    pub date: String,
    pub reason: String,
    pub missing: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub schema_version: u32,
    pub n: usize,
    pub tau: usize,
    pub raw_days: usize,
    pub missing_cells: usize,
    pub interpolated_cells: usize,
    pub dropped: Vec<DroppedDay>,
    pub first_date: Option<String>,
    pub last_date: Option<String>,
}

impl DataSummary {
    pub fn new(ds: &Dataset) -> Self {
        Self {
            schema_version: crate::formats::SCHEMA_VERSION,
            n: ds.dates.len(),
            tau: ds.tau(),
            raw_days: ds.raw_dates.len(),
            missing_cells: ds.report.missing_cells,
            interpolated_cells: ds.report.interpolated_cells,
            dropped: ds
                .report
                .dropped
                .iter()
                .map(|(d, r)| DroppedDay {
                    date: ds.raw_dates[*d].clone(),
                    reason: match r {
                        DropReason::TooManyMissing { .. } => "too_many_missing",
                        DropReason::MissingOpen => "missing_open",
                        DropReason::MissingClose => "missing_close",
                    }
                    .into(),
                    missing: match r {
                        DropReason::TooManyMissing { missing } => Some(*missing),
                        _ => None,
                    },
                })
                .collect(),
            first_date: ds.dates.first().cloned(),
            last_date: ds.dates.last().cloned(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_labels() {
        assert_eq!(parse_time("10:05"), Some(36300));
        assert_eq!(parse_time("10:05:30"), Some(36330));
        assert_eq!(parse_time("15"), Some(900));
        assert_eq!(parse_time("10:75"), None);
        assert_eq!(parse_time("x"), None);
    }

    #[test]
    fn missing_markers() {
        for s in ["", " ", "NA", "nan", "NULL", "-"] {
            assert!(is_missing(s));
        }
        assert!(!is_missing("0.5"));
    }
}
