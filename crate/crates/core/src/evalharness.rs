//! Accuracy metrics and the expanding-window backtest.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fpca::{ComponentSelection, FpcaModel};
use crate::gridcurves::FunctionalTimeSeries;
use crate::rng::derive_seed;
use crate::sieve::{sieve_prediction, BootstrapConfig, PointwiseInterval, SieveBootstrap, SieveForecast};
use crate::updating::{
    draws_to_intervals, flr_bootstrap_draws, pls_interval_update, pls_update, ts_update, update_columns, FlrModel,
    LambdaSchedule, UpdateContext, ValidationDay,
};
use crate::varmodel::{select_order, VarModel, DEFAULT_P_MAX};

/// Per-gridpoint and aggregate mean squared forecast error.
#[derive(Debug, Clone, PartialEq)]
pub struct Msfe {
    pub per_point: Vec<f64>,
    pub aggregate: f64,
}

fn check_same_shape(what: &'static str, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch {
            what,
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    if a.ncols() != b.ncols() {
        return Err(Error::ShapeMismatch {
            what,
            expected: a.ncols(),
            found: b.ncols(),
        });
    }
    Ok(())
}

/// MSFE over days (rows) for each grid point (column), and its mean over points.
pub fn msfe(actuals: &DMatrix<f64>, forecasts: &DMatrix<f64>) -> Result<Msfe> {
    check_same_shape("forecasts vs actuals", actuals, forecasts)?;
    let days = actuals.nrows().max(1) as f64;
    let per_point: Vec<f64> = (0..actuals.ncols())
        .map(|j| {
            (0..actuals.nrows())
                .map(|t| {
                    let e = actuals[(t, j)] - forecasts[(t, j)];
                    e * e
                })
                .sum::<f64>()
                / days
        })
        .collect();
    let aggregate = crate::math::mean(&per_point);
    Ok(Msfe { per_point, aggregate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageMode {
    /// Fraction of (day, point) pairs inside the interval.
    Pointwise,
    /// Fraction of days whose whole curve lies inside.
    Uniform,
}

/// Empirical coverage probability.
pub fn ecp(actuals: &DMatrix<f64>, lower: &DMatrix<f64>, upper: &DMatrix<f64>, mode: CoverageMode) -> Result<f64> {
    check_same_shape("lower bounds vs actuals", actuals, lower)?;
    check_same_shape("upper bounds vs actuals", actuals, upper)?;
    let (days, points) = actuals.shape();
    if days == 0 || points == 0 {
        return Ok(1.0);
    }
    let inside = |t: usize, j: usize| {
        let x = actuals[(t, j)];
        x >= lower[(t, j)] && x <= upper[(t, j)]
    };
    Ok(match mode {
        CoverageMode::Pointwise => {
            // A ratio of counts (not 1 - misses / total) keeps the rounding
            // monotone, so uniform <= pointwise holds exactly.
            let hits = (0..days)
                .flat_map(|t| (0..points).map(move |j| (t, j)))
                .filter(|&(t, j)| inside(t, j))
                .count();
            hits as f64 / (days * points) as f64
        }
        CoverageMode::Uniform => {
            let covered = (0..days).filter(|&t| (0..points).all(|j| inside(t, j))).count();
            covered as f64 / days as f64
        }
    })
}

/// Width plus `2/alpha` times the distance by which `actual` falls outside.
pub fn interval_score(lower: f64, upper: f64, actual: f64, alpha: f64) -> f64 {
    let mut s = upper - lower;
    if actual < lower {
        s += 2.0 / alpha * (lower - actual);
    }
    if actual > upper {
        s += 2.0 / alpha * (actual - upper);
    }
    s
}

/// Interval scores for each (day, point).
pub fn interval_scores(
    actuals: &DMatrix<f64>,
    lower: &DMatrix<f64>,
    upper: &DMatrix<f64>,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    check_same_shape("lower bounds vs actuals", actuals, lower)?;
    check_same_shape("upper bounds vs actuals", actuals, upper)?;
    Ok(DMatrix::from_fn(actuals.nrows(), actuals.ncols(), |t, j| {
        interval_score(lower[(t, j)], upper[(t, j)], actuals[(t, j)], alpha)
    }))
}

/// Per-gridpoint mean over days and the aggregate mean over grid points.
pub fn mean_interval_score(scores: &DMatrix<f64>) -> (Vec<f64>, f64) {
    let days = scores.nrows().max(1) as f64;
    let per_point: Vec<f64> = scores.column_iter().map(|c| c.sum() / days).collect();
    let aggregate = crate::math::mean(&per_point);
    (per_point, aggregate)
}

fn sign3(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Fraction of (day, point) pairs whose forecast sign matches the actual
/// sign; an exact zero only matches an exact zero.
pub fn sign_prediction_probability(actuals: &DMatrix<f64>, forecasts: &DMatrix<f64>) -> Result<f64> {
    check_same_shape("forecasts vs actuals", actuals, forecasts)?;
    let total = actuals.len();
    if total == 0 {
        return Ok(1.0);
    }
    let hits = actuals
        .iter()
        .zip(forecasts.iter())
        .filter(|(a, f)| sign3(**a) == sign3(**f))
        .count();
    Ok(hits as f64 / total as f64)
}

/// Point forecast method compared in the backtest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Ts,
    Pls,
    Ols,
    Flr,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ts, Method::Pls, Method::Ols, Method::Flr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ts => "TS",
            Method::Pls => "PLS",
            Method::Ols => "OLS",
            Method::Flr => "FLR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowScheme {
    /// Refit on every day before the forecast day.
    #[default]
    Expanding,
    /// Refit on the most recent `initial_train` days only.
    Rolling,
}

/// FPCA with the given selector and the AICc-selected VAR on its retained scores.
#[derive(Debug, Clone)]
pub struct TimeSeriesFit {
    pub fpca: FpcaModel,
    pub var: VarModel,
}

pub fn fit_time_series_model(
    train: &FunctionalTimeSeries,
    selection: ComponentSelection,
    p_max: usize,
) -> Result<TimeSeriesFit> {
    let fpca = FpcaModel::fit(train.values(), train.grid().quad_weight(), selection)?;
    let scores = fpca.retained_scores();
    let order = select_order(&scores, p_max)?;
    let var = VarModel::fit(&scores, order.p)?;
    Ok(TimeSeriesFit { fpca, var })
}

#[derive(Debug, Clone)]
pub struct BacktestPlan {
    pub initial_train: usize,
    pub n_test: usize,
    pub methods: Vec<Method>,
    /// Updating periods `m`.
    pub periods: Vec<usize>,
    pub bootstrap: BootstrapConfig,
    pub p_max: usize,
    pub selection: ComponentSelection,
    pub window: WindowScheme,
    /// Shrinkage for PLS point forecasts.
    pub point_lambda: Option<LambdaSchedule>,
    /// Shrinkage for PLS bootstrap intervals.
    pub interval_lambda: Option<LambdaSchedule>,
    /// Whether updating methods also get bootstrap intervals.
    pub updating_intervals: bool,
}

impl BacktestPlan {
    /// Defaults for a grid with `tau` points: 200 training days, 50 test days,
    /// all methods and periods `2..tau-1`.
    pub fn new(tau: usize) -> Self {
        Self {
            initial_train: 200,
            n_test: 50,
            methods: Method::ALL.to_vec(),
            periods: crate::updating::default_periods(tau),
            bootstrap: BootstrapConfig::default(),
            p_max: DEFAULT_P_MAX,
            selection: ComponentSelection::EigenRatio,
            window: WindowScheme::Expanding,
            point_lambda: None,
            interval_lambda: None,
            updating_intervals: true,
        }
    }

    fn has_updating(&self) -> bool {
        self.methods.iter().any(|m| *m != Method::Ts)
    }

    pub fn validate(&self, n: usize, tau: usize) -> Result<()> {
        self.bootstrap.validate()?;
        if self.initial_train + self.n_test > n {
            return Err(Error::InsufficientData {
                what: "days for training and test windows",
                need: self.initial_train + self.n_test,
                got: n,
            });
        }
        if self.initial_train < 3 {
            return Err(Error::InvalidConfig(
                "initial training window needs at least 3 days".into(),
            ));
        }
        if self.n_test == 0 {
            return Err(Error::InvalidConfig("test window is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods requested".into()));
        }
        if self.has_updating() {
            if self.periods.is_empty() {
                return Err(Error::InvalidConfig("updating methods need at least one period".into()));
            }
            if let Some(&m) = self.periods.iter().find(|&&m| m < 2 || m >= tau) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "updating period {m} outside 2..{tau}"
                )));
            }
        }
        if self.methods.contains(&Method::Pls) {
            for (name, schedule) in [("point", &self.point_lambda), ("interval", &self.interval_lambda)] {
                let Some(s) = schedule else {
                    return Err(Error::InvalidConfig(alloc::format!(
                        "PLS needs a {name} shrinkage schedule"
                    )));
                };
                s.validate()?;
                if let Some(&m) = self.periods.iter().find(|&&m| s.get(m).is_none()) {
                    return Err(Error::InvalidConfig(alloc::format!(
                        "{name} shrinkage schedule has no value for period {m}"
                    )));
                }
                if let Some(end) = s.tuned_through {
                    if end > self.initial_train {
                        return Err(Error::InvalidConfig(alloc::format!(
                            "{name} shrinkage was tuned on days up to {end}, overlapping the test window starting at {}",
                            self.initial_train
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn train_range(&self, day: usize) -> (usize, usize) {
        match self.window {
            WindowScheme::Expanding => (0, day),
            WindowScheme::Rolling => (day - self.initial_train, day),
        }
    }
}

/// Coverage and score of one interval level.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMetrics {
    pub alpha: f64,
    pub ecp_pointwise: f64,
    pub ecp_uniform: f64,
    pub mean_interval_score: f64,
    pub interval_score_per_point: Vec<f64>,
}

/// Full-curve accuracy of the time-series forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct FullCurveSummary {
    pub days: usize,
    pub msfe: Msfe,
    /// Pointwise bootstrap intervals.
    pub pointwise: Vec<IntervalMetrics>,
    /// Uniform bootstrap bands.
    pub bands: Vec<IntervalMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodMetrics {
    pub m: usize,
    pub days: usize,
    pub msfe: f64,
    pub sign_probability: f64,
    pub intervals: Vec<IntervalMetrics>,
}

/// Averages over updating periods.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodAverages {
    pub msfe: f64,
    pub sign_probability: f64,
    /// `(alpha, ecp_pointwise, ecp_uniform, mean_interval_score)`.
    pub intervals: Vec<(f64, f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodTable {
    pub method: Method,
    pub periods: Vec<PeriodMetrics>,
    pub average: PeriodAverages,
}

impl MethodTable {
    pub fn period(&self, m: usize) -> Option<&PeriodMetrics> {
        self.periods.iter().find(|p| p.m == m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedDay {
    pub day: usize,
    pub reason: String,
}

/// A single (method, period, day) cell that could not be computed.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedCell {
    pub method: Method,
    pub m: usize,
    pub day: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub test_days: Vec<usize>,
    pub full_curve: FullCurveSummary,
    /// Empty when only the time-series method was requested.
    pub updating: Vec<MethodTable>,
    pub skipped_days: Vec<SkippedDay>,
    pub skipped_cells: Vec<SkippedCell>,
}

impl MetricReport {
    pub fn table(&self, method: Method) -> Option<&MethodTable> {
        self.updating.iter().find(|t| t.method == method)
    }
}

/// Point update and pointwise intervals (one per alpha level, possibly none)
/// on the updating grid of one period.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateCell {
    pub point: Vec<f64>,
    pub intervals: Vec<PointwiseInterval>,
}

/// Everything forecast for one day from its training window.
#[derive(Debug, Clone)]
pub struct DayForecast {
    pub fit: TimeSeriesFit,
    pub sieve: SieveForecast,
    /// Keyed by `(method, m)`; failures keep their reason.
    pub cells: BTreeMap<(Method, usize), core::result::Result<UpdateCell, String>>,
}

/// Fits on `train`, forecasts the next day and updates it at each planned
/// period from the matching prefix of `current` (the full curve; each method
/// only reads the values observed by period `m`).
pub fn forecast_day(
    train: &FunctionalTimeSeries,
    current: &[f64],
    plan: &BacktestPlan,
    seed: u64,
) -> Result<DayForecast> {
    let tau = train.grid().tau();
    if current.len() != tau - 1 {
        return Err(Error::ShapeMismatch {
            what: "current curve length",
            expected: tau - 1,
            found: current.len(),
        });
    }
    let fit = fit_time_series_model(train, plan.selection, plan.p_max)?;
    let cfg = BootstrapConfig {
        seed,
        ..plan.bootstrap.clone()
    };
    let sieve = sieve_prediction(train, &fit.fpca, &fit.var, &cfg)?;
    let alphas = &cfg.alpha_levels;

    let mut cells = BTreeMap::new();
    if plan.has_updating() {
        for &m in &plan.periods {
            let ctx = UpdateContext::from_curve(m, current, sieve.ts_scores.clone())?;
            let cols = update_columns(m, tau);
            for &method in &plan.methods {
                let res = match method {
                    Method::Ts => ts_update(&ctx, &fit.fpca).map(|point| UpdateCell {
                        point,
                        intervals: if plan.updating_intervals {
                            sieve
                                .pointwise
                                .iter()
                                .map(|iv| PointwiseInterval {
                                    alpha: iv.alpha,
                                    lower: iv.lower[cols.clone()].to_vec(),
                                    upper: iv.upper[cols.clone()].to_vec(),
                                })
                                .collect()
                        } else {
                            Vec::new()
                        },
                    }),
                    Method::Pls | Method::Ols => {
                        let (pl, il) = if method == Method::Ols {
                            (0.0, 0.0)
                        } else {
                            (
                                plan.point_lambda.as_ref().and_then(|s| s.get(m)).unwrap_or(0.0),
                                plan.interval_lambda.as_ref().and_then(|s| s.get(m)).unwrap_or(0.0),
                            )
                        };
                        pls_update(&ctx, pl, &fit.fpca).and_then(|point| {
                            let intervals = if plan.updating_intervals {
                                pls_interval_update(&ctx, il, &fit.fpca, &sieve, alphas)?
                            } else {
                                Vec::new()
                            };
                            Ok(UpdateCell { point, intervals })
                        })
                    }
                    Method::Flr => continue,
                };
                cells.insert((method, m), res.map_err(|e| e.to_string()));
            }
        }
        if plan.methods.contains(&Method::Flr) {
            flr_cells(train, &fit, &sieve, current, plan, &mut cells)?;
        }
    }
    Ok(DayForecast { fit, sieve, cells })
}

#[derive(Debug, Clone)]
struct DayResult {
    actual: Vec<f64>,
    ts_point: Vec<f64>,
    pointwise: Vec<(Vec<f64>, Vec<f64>)>,
    bands: Vec<(Vec<f64>, Vec<f64>)>,
    cells: BTreeMap<(Method, usize), core::result::Result<UpdateCell, String>>,
}

fn run_day(fts: &FunctionalTimeSeries, plan: &BacktestPlan, day: usize) -> Result<DayResult> {
    let (start, end) = plan.train_range(day);
    let train = fts.slice(start, end);
    let actual = fts.curve(day);
    let f = forecast_day(&train, &actual, plan, derive_seed(plan.bootstrap.seed, day as u64))?;
    Ok(DayResult {
        ts_point: f.sieve.ts_point.clone(),
        pointwise: f
            .sieve
            .pointwise
            .iter()
            .map(|i| (i.lower.clone(), i.upper.clone()))
            .collect(),
        bands: f
            .sieve
            .bands
            .iter()
            .map(|b| (b.lower.clone(), b.upper.clone()))
            .collect(),
        actual,
        cells: f.cells,
    })
}

fn flr_cells(
    train: &FunctionalTimeSeries,
    fit: &TimeSeriesFit,
    sieve: &SieveForecast,
    current: &[f64],
    plan: &BacktestPlan,
    cells: &mut BTreeMap<(Method, usize), core::result::Result<UpdateCell, String>>,
) -> Result<()> {
    let mut models = Vec::new();
    for &m in &plan.periods {
        match FlrModel::fit(train.values(), m) {
            Ok(model) => models.push(model),
            Err(e) => {
                cells.insert((Method::Flr, m), Err(e.to_string()));
            }
        }
    }
    let mut points = Vec::with_capacity(models.len());
    for model in &models {
        points.push(model.update(&current[..model.m() - 1])?);
    }
    let intervals = if plan.updating_intervals && !models.is_empty() {
        // Same seed as the sieve forecast so the pseudo-series match its residual draws.
        let boot = SieveBootstrap::new(train, &fit.fpca, &fit.var, sieve.seed)?;
        let (draws, _) = flr_bootstrap_draws(&models, current, &boot, sieve)?;
        draws
            .iter()
            .map(|d| draws_to_intervals(d, &plan.bootstrap.alpha_levels))
            .collect()
    } else {
        alloc::vec![Vec::new(); models.len()]
    };
    for ((model, point), intervals) in models.iter().zip(points).zip(intervals) {
        cells.insert((Method::Flr, model.m()), Ok(UpdateCell { point, intervals }));
    }
    Ok(())
}

fn interval_metrics(
    actuals: &DMatrix<f64>,
    lower: &DMatrix<f64>,
    upper: &DMatrix<f64>,
    alpha: f64,
) -> Result<IntervalMetrics> {
    let scores = interval_scores(actuals, lower, upper, alpha)?;
    let (per_point, aggregate) = mean_interval_score(&scores);
    Ok(IntervalMetrics {
        alpha,
        ecp_pointwise: ecp(actuals, lower, upper, CoverageMode::Pointwise)?,
        ecp_uniform: ecp(actuals, lower, upper, CoverageMode::Uniform)?,
        mean_interval_score: aggregate,
        interval_score_per_point: per_point,
    })
}

fn rows_to_matrix(rows: &[&[f64]]) -> DMatrix<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), cols, |t, j| rows[t][j])
}

/// Runs the backtest over days `initial_train..initial_train + n_test`.
pub fn run_backtest(fts: &FunctionalTimeSeries, plan: &BacktestPlan) -> Result<MetricReport> {
    let tau = fts.grid().tau();
    plan.validate(fts.n(), tau)?;
    let days: Vec<usize> = (plan.initial_train..plan.initial_train + plan.n_test).collect();

    #[cfg(feature = "parallel")]
    let results: Vec<Result<DayResult>> = {
        use rayon::prelude::*;
        days.par_iter().map(|&d| run_day(fts, plan, d)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<DayResult>> = days.iter().map(|&d| run_day(fts, plan, d)).collect();

    let mut ok: Vec<(usize, DayResult)> = Vec::new();
    let mut skipped_days = Vec::new();
    for (&day, res) in days.iter().zip(results) {
        match res {
            Ok(r) => ok.push((day, r)),
            Err(e) => skipped_days.push(SkippedDay {
                day,
                reason: e.to_string(),
            }),
        }
    }
    if ok.is_empty() {
        return Err(Error::InsufficientData {
            what: "successfully forecast test days",
            need: 1,
            got: 0,
        });
    }

    let alphas = &plan.bootstrap.alpha_levels;
    let actuals = rows_to_matrix(&ok.iter().map(|(_, r)| r.actual.as_slice()).collect::<Vec<_>>());
    let ts = rows_to_matrix(&ok.iter().map(|(_, r)| r.ts_point.as_slice()).collect::<Vec<_>>());
    let mut pointwise = Vec::new();
    let mut bands = Vec::new();
    for (a, &alpha) in alphas.iter().enumerate() {
        let lo = rows_to_matrix(&ok.iter().map(|(_, r)| r.pointwise[a].0.as_slice()).collect::<Vec<_>>());
        let hi = rows_to_matrix(&ok.iter().map(|(_, r)| r.pointwise[a].1.as_slice()).collect::<Vec<_>>());
        pointwise.push(interval_metrics(&actuals, &lo, &hi, alpha)?);
        let lo = rows_to_matrix(&ok.iter().map(|(_, r)| r.bands[a].0.as_slice()).collect::<Vec<_>>());
        let hi = rows_to_matrix(&ok.iter().map(|(_, r)| r.bands[a].1.as_slice()).collect::<Vec<_>>());
        bands.push(interval_metrics(&actuals, &lo, &hi, alpha)?);
    }
    let full_curve = FullCurveSummary {
        days: ok.len(),
        msfe: msfe(&actuals, &ts)?,
        pointwise,
        bands,
    };

    let mut updating = Vec::new();
    let mut skipped_cells = Vec::new();
    if plan.has_updating() {
        let mut methods = plan.methods.clone();
        methods.sort();
        methods.dedup();
        for method in methods {
            let mut periods = Vec::new();
            for &m in &plan.periods {
                let cols = update_columns(m, tau);
                let mut act = Vec::new();
                let mut cells = Vec::new();
                for (day, r) in &ok {
                    match r.cells.get(&(method, m)) {
                        Some(Ok(c)) => {
                            act.push(&r.actual[cols.clone()]);
                            cells.push(c);
                        }
                        Some(Err(reason)) => skipped_cells.push(SkippedCell {
                            method,
                            m,
                            day: *day,
                            reason: reason.clone(),
                        }),
                        None => {}
                    }
                }
                if cells.is_empty() {
                    continue;
                }
                let a = rows_to_matrix(&act);
                let f = rows_to_matrix(&cells.iter().map(|c| c.point.as_slice()).collect::<Vec<_>>());
                let mut intervals = Vec::new();
                if cells.iter().all(|c| c.intervals.len() == alphas.len()) {
                    for (i, &alpha) in alphas.iter().enumerate() {
                        let lo = rows_to_matrix(
                            &cells
                                .iter()
                                .map(|c| c.intervals[i].lower.as_slice())
                                .collect::<Vec<_>>(),
                        );
                        let hi = rows_to_matrix(
                            &cells
                                .iter()
                                .map(|c| c.intervals[i].upper.as_slice())
                                .collect::<Vec<_>>(),
                        );
                        intervals.push(interval_metrics(&a, &lo, &hi, alpha)?);
                    }
                }
                periods.push(PeriodMetrics {
                    m,
                    days: cells.len(),
                    msfe: msfe(&a, &f)?.aggregate,
                    sign_probability: sign_prediction_probability(&a, &f)?,
                    intervals,
                });
            }
            let average = average_periods(&periods, alphas);
            updating.push(MethodTable {
                method,
                periods,
                average,
            });
        }
    }

    Ok(MetricReport {
        test_days: ok.iter().map(|(d, _)| *d).collect(),
        full_curve,
        updating,
        skipped_days,
        skipped_cells,
    })
}

fn average_periods(periods: &[PeriodMetrics], alphas: &[f64]) -> PeriodAverages {
    let n = periods.len().max(1) as f64;
    let msfe = periods.iter().map(|p| p.msfe).sum::<f64>() / n;
    let sign_probability = periods.iter().map(|p| p.sign_probability).sum::<f64>() / n;
    let with_iv: Vec<&PeriodMetrics> = periods.iter().filter(|p| p.intervals.len() == alphas.len()).collect();
    let intervals = if with_iv.is_empty() {
        Vec::new()
    } else {
        let k = with_iv.len() as f64;
        alphas
            .iter()
            .enumerate()
            .map(|(i, &alpha)| {
                let s = |f: fn(&IntervalMetrics) -> f64| with_iv.iter().map(|p| f(&p.intervals[i])).sum::<f64>() / k;
                (
                    alpha,
                    s(|m| m.ecp_pointwise),
                    s(|m| m.ecp_uniform),
                    s(|m| m.mean_interval_score),
                )
            })
            .collect()
    };
    PeriodAverages {
        msfe,
        sign_probability,
        intervals,
    }
}

/// Validation days `train_end..train_end + n_validation`, each fitted on all
/// earlier days, for shrinkage tuning. Days whose fit fails are dropped.
pub fn prepare_validation_days(
    fts: &FunctionalTimeSeries,
    train_end: usize,
    n_validation: usize,
    selection: ComponentSelection,
    p_max: usize,
    bootstrap: Option<&BootstrapConfig>,
) -> Result<Vec<ValidationDay>> {
    if train_end + n_validation > fts.n() {
        return Err(Error::InsufficientData {
            what: "days for training and validation windows",
            need: train_end + n_validation,
            got: fts.n(),
        });
    }
    let one = |day: usize| -> Option<ValidationDay> {
        let train = fts.slice(0, day);
        let fit = fit_time_series_model(&train, selection, p_max).ok()?;
        let (ts_scores, boot) = match bootstrap {
            Some(cfg) => {
                let cfg = BootstrapConfig {
                    seed: derive_seed(cfg.seed, day as u64),
                    ..cfg.clone()
                };
                let s = sieve_prediction(&train, &fit.fpca, &fit.var, &cfg).ok()?;
                (s.ts_scores.clone(), Some(s))
            }
            None => (crate::sieve::ts_score_forecast(&fit.fpca, &fit.var).ok()?, None),
        };
        Some(ValidationDay {
            fpca: fit.fpca,
            ts_scores,
            actual: fts.curve(day),
            bootstrap: boot,
        })
    };
    let days: Vec<usize> = (train_end..train_end + n_validation).collect();
    #[cfg(feature = "parallel")]
    let out: Vec<Option<ValidationDay>> = {
        use rayon::prelude::*;
        days.par_iter().map(|&d| one(d)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let out: Vec<Option<ValidationDay>> = days.iter().map(|&d| one(d)).collect();
    Ok(out.into_iter().flatten().collect())
}
