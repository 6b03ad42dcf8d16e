//! Tidy CSV exports for plotting and tables.

use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};
use crate::formats::{ForecastFile, LambdaScheduleFile, ReportFile, UpdateFile};

/// Column suffix for level `alpha`: `0.2 -> "80"`, `0.05 -> "95"`.
pub fn level_label(alpha: f64) -> String {
    let pct = (1.0 - alpha) * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round() as i64)
    } else {
        let s = format!("{pct:.3}");
        s.trim_end_matches('0').replace('.', "_")
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

struct Table {
    path: PathBuf,
    writer: csv::Writer<std::fs::File>,
}

impl Table {
    fn create(path: &Path, header: &[String]) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    fn row(&mut self, rec: &[String]) -> Result<()> {
        self.writer.write_record(rec)?;
        Ok(())
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// One row per curve grid point `u_2..u_tau`.
pub fn write_forecast_csv(path: &Path, f: &ForecastFile) -> Result<PathBuf> {
    let mut header = strings(&["grid_index", "time", "point", "ts_point", "error_sd"]);
    for iv in &f.pointwise {
        let l = level_label(iv.alpha);
        header.push(format!("lo{l}"));
        header.push(format!("hi{l}"));
    }
    for b in &f.bands {
        let l = level_label(b.alpha);
        header.push(format!("band_lo{l}"));
        header.push(format!("band_hi{l}"));
    }
    let mut t = Table::create(path, &header)?;
    for j in 0..f.point.len() {
        let mut rec = vec![
            (j + 2).to_string(),
            f.time_labels.get(j + 1).cloned().unwrap_or_default(),
            num(f.point[j]),
            num(f.ts_point[j]),
            num(f.error_sd[j]),
        ];
        for iv in &f.pointwise {
            rec.push(num(iv.lower[j]));
            rec.push(num(iv.upper[j]));
        }
        for b in &f.bands {
            rec.push(num(b.lower[j]));
            rec.push(num(b.upper[j]));
        }
        t.row(&rec)?;
    }
    t.finish()
}

/// Tidy update table: one row per (period, method, grid point).
pub fn write_update_csv(path: &Path, u: &UpdateFile, alphas: &[f64]) -> Result<PathBuf> {
    let mut header = strings(&["m", "grid_index", "time", "method", "actual", "point"]);
    for a in alphas {
        let l = level_label(*a);
        header.push(format!("lo{l}"));
        header.push(format!("hi{l}"));
    }
    let mut t = Table::create(path, &header)?;
    for p in &u.periods {
        for meth in &p.methods {
            let Some(point) = &meth.point else { continue };
            for (j, &gi) in p.grid_indices.iter().enumerate() {
                let mut rec = vec![
                    p.m.to_string(),
                    gi.to_string(),
                    u.time_labels.get(gi - 1).cloned().unwrap_or_default(),
                    meth.method.clone(),
                    p.actual.as_ref().map(|a| num(a[j])).unwrap_or_default(),
                    num(point[j]),
                ];
                for a in alphas {
                    match meth.intervals.iter().find(|iv| (iv.alpha - a).abs() < 1e-12) {
                        Some(iv) => {
                            rec.push(num(iv.lower[j]));
                            rec.push(num(iv.upper[j]));
                        }
                        None => {
                            rec.push(String::new());
                            rec.push(String::new());
                        }
                    }
                }
                t.row(&rec)?;
            }
        }
    }
    t.finish()
}

pub fn write_lambda_csv(path: &Path, s: &LambdaScheduleFile, time_labels: &[String]) -> Result<PathBuf> {
    let mut t = Table::create(path, &strings(&["m", "time", "point_lambda", "interval_lambda"]))?;
    for (m, v) in &s.point.values {
        t.row(&[
            m.to_string(),
            time_labels.get(m - 1).cloned().unwrap_or_default(),
            num(*v),
            s.interval.values.get(m).map(|x| num(*x)).unwrap_or_default(),
        ])?;
    }
    t.finish()
}

fn alphas_of(r: &ReportFile) -> Vec<f64> {
    r.full_curve.pointwise.iter().map(|m| m.alpha).collect()
}

/// Writes every table and figure-data CSV derivable from a report.
pub fn write_report_csvs(dir: &Path, r: &ReportFile) -> Result<Vec<PathBuf>> {
    let alphas = alphas_of(r);
    let mut out = Vec::new();

    // Full-curve accuracy of the time-series forecast.
    let mut header = strings(&["method", "days", "msfe"]);
    for a in &alphas {
        let l = level_label(*a);
        header.extend([
            format!("ecp_pointwise_{l}"),
            format!("ecp_uniform_{l}"),
            format!("interval_score_{l}"),
            format!("band_interval_score_{l}"),
        ]);
    }
    let mut t = Table::create(&dir.join("table_full_curve.csv"), &header)?;
    let fc = &r.full_curve;
    let mut rec = vec!["TS".to_string(), fc.days.to_string(), num(fc.msfe)];
    for (p, b) in fc.pointwise.iter().zip(&fc.bands) {
        rec.extend([
            num(p.ecp_pointwise),
            num(b.ecp_uniform),
            num(p.mean_interval_score),
            num(b.mean_interval_score),
        ]);
    }
    t.row(&rec)?;
    out.push(t.finish()?);

    let mut header = strings(&["grid_index", "time", "msfe"]);
    for a in &alphas {
        header.push(format!("interval_score_{}", level_label(*a)));
    }
    let mut t = Table::create(&dir.join("full_curve_by_gridpoint.csv"), &header)?;
    for j in 0..fc.msfe_per_point.len() {
        let mut rec = vec![
            (j + 2).to_string(),
            r.time_labels.get(j + 1).cloned().unwrap_or_default(),
            num(fc.msfe_per_point[j]),
        ];
        for p in &fc.pointwise {
            rec.push(num(p.interval_score_per_point[j]));
        }
        t.row(&rec)?;
    }
    out.push(t.finish()?);

    if !r.updating.is_empty() {
        let mut header = strings(&["method", "msfe", "sign_probability"]);
        for a in &alphas {
            let l = level_label(*a);
            header.extend([
                format!("ecp_pointwise_{l}"),
                format!("ecp_uniform_{l}"),
                format!("interval_score_{l}"),
            ]);
        }
        let mut t = Table::create(&dir.join("table_updating.csv"), &header)?;
        for m in &r.updating {
            let mut rec = vec![m.method.clone(), num(m.msfe), num(m.sign_probability)];
            for a in &alphas {
                match m.intervals.iter().find(|i| (i.alpha - a).abs() < 1e-12) {
                    Some(i) => rec.extend([num(i.ecp_pointwise), num(i.ecp_uniform), num(i.mean_interval_score)]),
                    None => rec.extend([String::new(), String::new(), String::new()]),
                }
            }
            t.row(&rec)?;
        }
        out.push(t.finish()?);

        let mut header = strings(&["method", "m", "time", "days", "msfe", "sign_probability"]);
        for a in &alphas {
            let l = level_label(*a);
            header.extend([
                format!("ecp_pointwise_{l}"),
                format!("ecp_uniform_{l}"),
                format!("interval_score_{l}"),
            ]);
        }
        let mut t = Table::create(&dir.join("updating_by_period.csv"), &header)?;
        for m in &r.updating {
            for p in &m.periods {
                let mut rec = vec![
                    m.method.clone(),
                    p.m.to_string(),
                    r.time_labels.get(p.m - 1).cloned().unwrap_or_default(),
                    p.days.to_string(),
                    num(p.msfe),
                    num(p.sign_probability),
                ];
                for a in &alphas {
                    match p.intervals.iter().find(|i| (i.alpha - a).abs() < 1e-12) {
                        Some(i) => rec.extend([num(i.ecp_pointwise), num(i.ecp_uniform), num(i.mean_interval_score)]),
                        None => rec.extend([String::new(), String::new(), String::new()]),
                    }
                }
                t.row(&rec)?;
            }
        }
        out.push(t.finish()?);
    }

    if let Some(s) = &r.lambda {
        out.push(write_lambda_csv(&dir.join("lambda_by_period.csv"), s, &r.time_labels)?);
    }

    let mut t = Table::create(
        &dir.join("skipped.csv"),
        &strings(&["day", "date", "method", "m", "reason"]),
    )?;
    for s in &r.skipped {
        t.row(&[
            s.day.to_string(),
            s.date.clone(),
            s.method.clone().unwrap_or_default(),
            s.m.map(|m| m.to_string()).unwrap_or_default(),
            s.reason.clone(),
        ])?;
    }
    out.push(t.finish()?);
    Ok(out)
}
