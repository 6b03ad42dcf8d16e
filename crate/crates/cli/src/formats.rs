//! Versioned JSON documents written and read by the CLI.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use intraday_fts_core::datagen::{BasisFamily, GroundTruth, LinkedBlocks, SynthSpec};
use intraday_fts_core::evalharness::{
    FullCurveSummary, IntervalMetrics, Method, MethodTable, MetricReport, PeriodMetrics,
};
use intraday_fts_core::fpca::FpcaModel;
use intraday_fts_core::sieve::SieveForecast;
use intraday_fts_core::updating::{LambdaSchedule, TuningObjective};
use intraday_fts_core::varmodel::{OrderSelection, VarModel};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix(what: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Usage(format!("{what}: ragged matrix rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::data(path, e.to_string()))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(CliError::data(path, format!("unsupported schema_version {v}"))),
        None => return Err(CliError::data(path, "missing schema_version")),
    }
    serde_json::from_value(value).map_err(|e| CliError::data(path, e.to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct FpcaDoc {
    pub k: usize,
    pub k_full: usize,
    pub degenerate: bool,
    pub quad_weight: f64,
    pub mean: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub spectrum: Vec<f64>,
    /// One entry per component.
    pub eigenfunctions: Vec<Vec<f64>>,
}

impl FpcaDoc {
    pub fn new(f: &FpcaModel) -> Self {
        Self {
            k: f.k(),
            k_full: f.k_full(),
            degenerate: f.is_degenerate(),
            quad_weight: f.quad_weight(),
            mean: f.mean().to_vec(),
            eigenvalues: f.eigenvalues().to_vec(),
            spectrum: f.spectrum().to_vec(),
            eigenfunctions: rows(&f.eigenfunctions().transpose()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VarDoc {
    pub p: usize,
    pub k: usize,
    pub spectral_radius: f64,
    pub forward: Vec<Vec<Vec<f64>>>,
    pub backward: Vec<Vec<Vec<f64>>>,
    pub sigma: Vec<Vec<f64>>,
    /// `(order, AICc)` for every order tried.
    pub aicc: Vec<(usize, f64)>,
}

impl VarDoc {
    pub fn new(v: &VarModel, order: &OrderSelection) -> Self {
        Self {
            p: v.p(),
            k: v.k(),
            spectral_radius: v.spectral_radius(),
            forward: v.forward().iter().map(rows).collect(),
            backward: v.backward().iter().map(rows).collect(),
            sigma: rows(v.sigma()),
            aicc: order.criteria.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub n: usize,
    pub tau: usize,
    pub dates: (String, String),
    pub time_labels: Vec<String>,
    pub fpca: FpcaDoc,
    pub var: VarDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IntervalDoc {
    pub alpha: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BandDoc {
    pub alpha: f64,
    pub radius_factor: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ForecastFlags {
    pub zero_sd_points: usize,
    pub few_replicates: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ForecastFile {
    pub schema_version: u32,
    /// Date of the last curve used for fitting.
    pub fitted_through: String,
    pub n: usize,
    pub time_labels: Vec<String>,
    pub k: usize,
    pub p: usize,
    pub replicates: usize,
    pub seed: u64,
    pub center: String,
    pub point: Vec<f64>,
    pub ts_point: Vec<f64>,
    pub ts_scores: Vec<f64>,
    pub error_sd: Vec<f64>,
    pub pointwise: Vec<IntervalDoc>,
    pub bands: Vec<BandDoc>,
    pub flags: ForecastFlags,
}

impl ForecastFile {
    pub fn from_sieve(s: &SieveForecast, p: usize, center: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            fitted_through: String::new(),
            n: 0,
            time_labels: Vec::new(),
            k: s.ts_scores.len(),
            p,
            replicates: s.replicates(),
            seed: s.seed,
            center: center.to_string(),
            point: s.point.clone(),
            ts_point: s.ts_point.clone(),
            ts_scores: s.ts_scores.clone(),
            error_sd: s.error_sd.clone(),
            pointwise: s
                .pointwise
                .iter()
                .map(|i| IntervalDoc {
                    alpha: i.alpha,
                    lower: i.lower.clone(),
                    upper: i.upper.clone(),
                })
                .collect(),
            bands: s
                .bands
                .iter()
                .map(|b| BandDoc {
                    alpha: b.alpha,
                    radius_factor: b.radius_factor,
                    lower: b.lower.clone(),
                    upper: b.upper.clone(),
                })
                .collect(),
            flags: ForecastFlags {
                zero_sd_points: s.flags.zero_sd_points,
                few_replicates: s.flags.few_replicates,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveDoc {
    Msfe,
    IntervalScore { alpha: f64 },
}

impl From<TuningObjective> for ObjectiveDoc {
    fn from(o: TuningObjective) -> Self {
        match o {
            TuningObjective::Msfe => ObjectiveDoc::Msfe,
            TuningObjective::IntervalScore { alpha } => ObjectiveDoc::IntervalScore { alpha },
        }
    }
}

impl From<&ObjectiveDoc> for TuningObjective {
    fn from(o: &ObjectiveDoc) -> Self {
        match o {
            ObjectiveDoc::Msfe => TuningObjective::Msfe,
            ObjectiveDoc::IntervalScore { alpha } => TuningObjective::IntervalScore { alpha: *alpha },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScheduleDoc {
    pub objective: ObjectiveDoc,
    pub tuned_through: Option<usize>,
    /// Shrinkage keyed by updating period `m`.
    pub values: BTreeMap<usize, f64>,
}

impl ScheduleDoc {
    pub fn new(s: &LambdaSchedule) -> Self {
        Self {
            objective: s.objective.into(),
            tuned_through: s.tuned_through,
            values: s.values.iter().map(|(k, v)| (*k, *v)).collect(),
        }
    }

    pub fn to_schedule(&self) -> LambdaSchedule {
        LambdaSchedule {
            objective: (&self.objective).into(),
            values: self.values.iter().map(|(k, v)| (*k, *v)).collect(),
            tuned_through: self.tuned_through,
        }
    }
}

/// Point (MSFE-tuned) and interval (interval-score-tuned) schedules.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LambdaScheduleFile {
    pub schema_version: u32,
    pub point: ScheduleDoc,
    pub interval: ScheduleDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IntervalMetricsDoc {
    pub alpha: f64,
    pub ecp_pointwise: f64,
    pub ecp_uniform: f64,
    pub mean_interval_score: f64,
    pub interval_score_per_point: Vec<f64>,
}

impl From<&IntervalMetrics> for IntervalMetricsDoc {
    fn from(m: &IntervalMetrics) -> Self {
        Self {
            alpha: m.alpha,
            ecp_pointwise: m.ecp_pointwise,
            ecp_uniform: m.ecp_uniform,
            mean_interval_score: m.mean_interval_score,
            interval_score_per_point: m.interval_score_per_point.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FullCurveDoc {
    pub days: usize,
    pub msfe_per_point: Vec<f64>,
    pub msfe: f64,
    pub pointwise: Vec<IntervalMetricsDoc>,
    pub bands: Vec<IntervalMetricsDoc>,
}

impl From<&FullCurveSummary> for FullCurveDoc {
    fn from(f: &FullCurveSummary) -> Self {
        Self {
            days: f.days,
            msfe_per_point: f.msfe.per_point.clone(),
            msfe: f.msfe.aggregate,
            pointwise: f.pointwise.iter().map(Into::into).collect(),
            bands: f.bands.iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PeriodDoc {
    pub m: usize,
    pub days: usize,
    pub msfe: f64,
    pub sign_probability: f64,
    pub intervals: Vec<IntervalMetricsDoc>,
}

impl From<&PeriodMetrics> for PeriodDoc {
    fn from(p: &PeriodMetrics) -> Self {
        Self {
            m: p.m,
            days: p.days,
            msfe: p.msfe,
            sign_probability: p.sign_probability,
            intervals: p.intervals.iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AverageIntervalDoc {
    pub alpha: f64,
    pub ecp_pointwise: f64,
    pub ecp_uniform: f64,
    pub mean_interval_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MethodTableDoc {
    pub method: String,
    pub msfe: f64,
    pub sign_probability: f64,
    pub intervals: Vec<AverageIntervalDoc>,
    pub periods: Vec<PeriodDoc>,
}

impl From<&MethodTable> for MethodTableDoc {
    fn from(t: &MethodTable) -> Self {
        Self {
            method: t.method.name().to_string(),
            msfe: t.average.msfe,
            sign_probability: t.average.sign_probability,
            intervals: t
                .average
                .intervals
                .iter()
                .map(
                    |&(alpha, ecp_pointwise, ecp_uniform, mean_interval_score)| AverageIntervalDoc {
                        alpha,
                        ecp_pointwise,
                        ecp_uniform,
                        mean_interval_score,
                    },
                )
                .collect(),
            periods: t.periods.iter().map(Into::into).collect(),
        }
    }
}

impl MethodTableDoc {
    pub fn method(&self) -> Option<Method> {
        Method::parse(&self.method)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SkipDoc {
    pub day: usize,
    pub date: String,
    pub method: Option<String>,
    pub m: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportFile {
    pub schema_version: u32,
    pub time_labels: Vec<String>,
    pub test_dates: Vec<String>,
    pub initial_train: usize,
    pub full_curve: FullCurveDoc,
    pub updating: Vec<MethodTableDoc>,
    pub lambda: Option<LambdaScheduleFile>,
    pub skipped: Vec<SkipDoc>,
}

impl ReportFile {
    pub fn new(
        r: &MetricReport,
        dates: &[String],
        time_labels: &[String],
        initial_train: usize,
        lambda: Option<LambdaScheduleFile>,
    ) -> Self {
        let date = |d: usize| dates.get(d).cloned().unwrap_or_default();
        let mut skipped: Vec<SkipDoc> = r
            .skipped_days
            .iter()
            .map(|s| SkipDoc {
                day: s.day,
                date: date(s.day),
                method: None,
                m: None,
                reason: s.reason.clone(),
            })
            .collect();
        skipped.extend(r.skipped_cells.iter().map(|s| SkipDoc {
            day: s.day,
            date: date(s.day),
            method: Some(s.method.name().to_string()),
            m: Some(s.m),
            reason: s.reason.clone(),
        }));
        Self {
            schema_version: SCHEMA_VERSION,
            time_labels: time_labels.to_vec(),
            test_dates: r.test_days.iter().map(|&d| date(d)).collect(),
            initial_train,
            full_curve: (&r.full_curve).into(),
            updating: r.updating.iter().map(Into::into).collect(),
            lambda,
            skipped,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum BasisDoc {
    #[default]
    Sine,
    Polynomial,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LinkageDoc {
    pub split_m: usize,
    pub rho: Vec<Vec<f64>>,
    #[serde(default)]
    pub late_sd: f64,
}

/// Synthetic-data settings. Omitted dynamics default to independent
/// AR(1) scores with coefficient 0.5 and variances `1 / k^2`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpecFile {
    pub n: usize,
    pub tau: usize,
    pub basis: BasisDoc,
    pub k_true: usize,
    pub var_coefficients: Option<Vec<Vec<Vec<f64>>>>,
    pub innovation_cov: Option<Vec<Vec<f64>>>,
    pub noise_sd: f64,
    pub mean: Option<Vec<f64>>,
    pub seed: u64,
    pub burn_in: usize,
    pub linkage: Option<LinkageDoc>,
    /// Opening price used to turn curves into prices.
    pub open_price: f64,
    /// Minutes between grid points.
    pub step_minutes: u32,
    /// First grid time in minutes after midnight.
    pub start_minute: u32,
}

impl Default for SynthSpecFile {
    fn default() -> Self {
        Self {
            n: 250,
            tau: 75,
            basis: BasisDoc::Sine,
            k_true: 2,
            var_coefficients: None,
            innovation_cov: None,
            noise_sd: 0.1,
            mean: None,
            seed: 0,
            burn_in: 200,
            linkage: None,
            open_price: 100.0,
            step_minutes: 5,
            start_minute: 10 * 60,
        }
    }
}

impl SynthSpecFile {
    pub fn to_spec(&self) -> Result<SynthSpec> {
        let k = self.k_true;
        let var_coefficients = match &self.var_coefficients {
            Some(list) => list
                .iter()
                .map(|a| matrix("var_coefficients", a))
                .collect::<Result<Vec<_>>>()?,
            None => vec![DMatrix::identity(k, k) * 0.5],
        };
        let innovation_cov = match &self.innovation_cov {
            Some(c) => matrix("innovation_cov", c)?,
            None => DMatrix::from_fn(k, k, |r, c| if r == c { 1.0 / ((r + 1) * (r + 1)) as f64 } else { 0.0 }),
        };
        let linkage = match &self.linkage {
            Some(l) => Some(LinkedBlocks {
                split_m: l.split_m,
                rho: matrix("linkage.rho", &l.rho)?,
                late_sd: l.late_sd,
            }),
            None => None,
        };
        if !(self.open_price.is_finite() && self.open_price > 0.0) {
            return Err(CliError::Usage("open_price must be positive".into()));
        }
        if self.step_minutes == 0 {
            return Err(CliError::Usage("step_minutes must be positive".into()));
        }
        Ok(SynthSpec {
            n: self.n,
            tau: self.tau,
            basis: match self.basis {
                BasisDoc::Sine => BasisFamily::Sine,
                BasisDoc::Polynomial => BasisFamily::Polynomial,
            },
            k_true: k,
            var_coefficients,
            innovation_cov,
            noise_sd: self.noise_sd,
            mean: self.mean.clone(),
            seed: self.seed,
            burn_in: self.burn_in,
            linkage,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TruthFile {
    pub schema_version: u32,
    pub spec: SynthSpecFile,
    pub mean: Vec<f64>,
    /// One entry per component.
    pub basis: Vec<Vec<f64>>,
    pub scores: Vec<Vec<f64>>,
    pub late_basis: Option<Vec<Vec<f64>>>,
    pub late_scores: Option<Vec<Vec<f64>>>,
}

impl TruthFile {
    pub fn new(spec: &SynthSpecFile, t: &GroundTruth) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            spec: spec.clone(),
            mean: t.mean.clone(),
            basis: rows(&t.basis.transpose()),
            scores: rows(&t.scores),
            late_basis: t.late_basis.as_ref().map(|b| rows(&b.transpose())),
            late_scores: t.late_scores.as_ref().map(rows),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct UpdateMethodDoc {
    pub method: String,
    pub lambda: Option<f64>,
    pub point: Option<Vec<f64>>,
    pub intervals: Vec<IntervalDoc>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct UpdatePeriodDoc {
    pub m: usize,
    /// Grid indices of the updated values (`m+1..=tau`).
    pub grid_indices: Vec<usize>,
    pub actual: Option<Vec<f64>>,
    pub methods: Vec<UpdateMethodDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct UpdateFile {
    pub schema_version: u32,
    pub date: String,
    pub fitted_days: usize,
    pub time_labels: Vec<String>,
    pub periods: Vec<UpdatePeriodDoc>,
}
