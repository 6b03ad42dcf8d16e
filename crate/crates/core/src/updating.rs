//! Intraday dynamic updating: revise the forecast of the rest of day `n + 1`
//! after observing its first `m` grid values.
//!
//! Grid index `i` (1-based, `u_1` is the open) maps to curve column `i - 2`,
//! so the observed block `u_2..u_m` is columns `0..m-1` and the updating grid
//! `u_{m+1}..u_tau` is columns `m-1..tau-1`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fpca::{ComponentSelection, FpcaModel};
use crate::linalg;
use crate::math;
use crate::sieve::{PointwiseInterval, SieveBootstrap, SieveForecast};

/// Condition-number limit above which an OLS fit is treated as rank deficient.
pub const MAX_OLS_CONDITION: f64 = 1e12;
/// Relative ridge added to a singular FLR score cross-product.
pub const FLR_RIDGE: f64 = 1e-8;

/// A partially observed current curve.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateContext {
    m: usize,
    tau: usize,
    observed: Vec<f64>,
    ts_scores: Vec<f64>,
}

impl UpdateContext {
    /// `observed` holds the values at `u_2..u_m`.
    pub fn new(m: usize, tau: usize, observed: Vec<f64>, ts_scores: Vec<f64>) -> Result<Self> {
        check_period(m, tau)?;
        if observed.len() != m - 1 {
            return Err(Error::ShapeMismatch {
                what: "observed block",
                expected: m - 1,
                found: observed.len(),
            });
        }
        if let Some(i) = observed.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "observed block",
                row: 0,
                col: i,
            });
        }
        Ok(Self {
            m,
            tau,
            observed,
            ts_scores,
        })
    }

    /// Context built from the first `m - 1` values of a full curve.
    pub fn from_curve(m: usize, curve: &[f64], ts_scores: Vec<f64>) -> Result<Self> {
        let tau = curve.len() + 1;
        check_period(m, tau)?;
        Self::new(m, tau, curve[..m - 1].to_vec(), ts_scores)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    pub fn ts_scores(&self) -> &[f64] {
        &self.ts_scores
    }

    /// Curve columns of the updating grid.
    pub fn update_columns(&self) -> Range<usize> {
        update_columns(self.m, self.tau)
    }

    /// `F_e`: retained eigenfunctions on the observed block.
    pub fn design(&self, fpca: &FpcaModel) -> DMatrix<f64> {
        fpca.eigenfunctions().view((0, 0), (self.m - 1, fpca.k())).into_owned()
    }

    /// Observed block minus the mean.
    pub fn centered_observed(&self, fpca: &FpcaModel) -> DVector<f64> {
        DVector::from_iterator(self.m - 1, self.observed.iter().zip(fpca.mean()).map(|(x, m)| x - m))
    }

    fn check_model(&self, fpca: &FpcaModel) -> Result<()> {
        if fpca.curve_len() + 1 != self.tau {
            return Err(Error::ShapeMismatch {
                what: "FPCA curve length",
                expected: self.tau - 1,
                found: fpca.curve_len(),
            });
        }
        if self.ts_scores.len() != fpca.k() {
            return Err(Error::ShapeMismatch {
                what: "time-series score forecast",
                expected: fpca.k(),
                found: self.ts_scores.len(),
            });
        }
        Ok(())
    }
}

fn check_period(m: usize, tau: usize) -> Result<()> {
    if m < 2 || m >= tau {
        return Err(Error::InvalidConfig(alloc::format!(
            "updating period m = {m} outside 2..{tau}"
        )));
    }
    Ok(())
}

/// Curve columns `m-1..tau-1` of the updating grid for period `m`.
pub fn update_columns(m: usize, tau: usize) -> Range<usize> {
    m - 1..tau - 1
}

/// All updating periods `m = 2..tau-1`.
pub fn default_periods(tau: usize) -> Vec<usize> {
    (2..tau).collect()
}

/// Solver for `(F^T F + lambda I) b = F^T x + lambda b_ts` at a fixed `lambda`.
#[derive(Debug, Clone)]
struct PlsSystem {
    lambda: f64,
    /// `(F^T F + lambda I)^{-1}` when `lambda > 0`.
    inverse: Option<DMatrix<f64>>,
    /// `(F^T F + lambda I)^{-1} F^T x`, or the OLS solution when `lambda = 0`.
    data_part: DVector<f64>,
}

impl PlsSystem {
    fn new(f: &DMatrix<f64>, x: &DVector<f64>, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!(
                "shrinkage parameter must be finite and non-negative, got {lambda}"
            )));
        }
        let k = f.ncols();
        if lambda == 0.0 {
            if f.nrows() < k {
                return Err(Error::RankDeficient);
            }
            let y = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
            let b = linalg::least_squares(f, &y, MAX_OLS_CONDITION).map_err(|_| Error::RankDeficient)?;
            return Ok(Self {
                lambda,
                inverse: None,
                data_part: b.column(0).into_owned(),
            });
        }
        let mut gram = f.transpose() * f;
        for i in 0..k {
            gram[(i, i)] += lambda;
        }
        let inverse = gram.cholesky().ok_or(Error::RankDeficient)?.inverse();
        let data_part = &inverse * (f.transpose() * x);
        Ok(Self {
            lambda,
            inverse: Some(inverse),
            data_part,
        })
    }

    fn solve(&self, prior: &DVector<f64>) -> DVector<f64> {
        match &self.inverse {
            Some(inv) => &self.data_part + inv * prior * self.lambda,
            None => self.data_part.clone(),
        }
    }
}

/// PLS score estimate shrinking the observed-block fit toward the
/// time-series score forecast.
pub fn pls_scores(ctx: &UpdateContext, lambda: f64, fpca: &FpcaModel) -> Result<Vec<f64>> {
    ctx.check_model(fpca)?;
    let system = PlsSystem::new(&ctx.design(fpca), &ctx.centered_observed(fpca), lambda)?;
    Ok(system
        .solve(&DVector::from_column_slice(&ctx.ts_scores))
        .iter()
        .copied()
        .collect())
}

fn curve_on_update_grid(fpca: &FpcaModel, scores: &[f64], cols: Range<usize>) -> Vec<f64> {
    let phi = fpca.eigenfunctions();
    cols.map(|c| fpca.mean()[c] + scores.iter().enumerate().map(|(k, s)| s * phi[(c, k)]).sum::<f64>())
        .collect()
}

/// PLS forecast of the updating grid.
pub fn pls_update(ctx: &UpdateContext, lambda: f64, fpca: &FpcaModel) -> Result<Vec<f64>> {
    let b = pls_scores(ctx, lambda, fpca)?;
    Ok(curve_on_update_grid(fpca, &b, ctx.update_columns()))
}

/// Least-squares fit to the observed block, i.e. PLS with `lambda = 0`.
pub fn ols_update(ctx: &UpdateContext, fpca: &FpcaModel) -> Result<Vec<f64>> {
    pls_update(ctx, 0.0, fpca)
}

/// Time-series forecast restricted to the updating grid.
pub fn ts_update(ctx: &UpdateContext, fpca: &FpcaModel) -> Result<Vec<f64>> {
    ctx.check_model(fpca)?;
    Ok(curve_on_update_grid(fpca, &ctx.ts_scores, ctx.update_columns()))
}

/// Penalized criterion `|x_c - F b|^2 + lambda |b - b_ts|^2` (unweighted sums).
pub fn pls_criterion(ctx: &UpdateContext, fpca: &FpcaModel, scores: &[f64], lambda: f64) -> f64 {
    let b = DVector::from_column_slice(scores);
    let fit = ctx.centered_observed(fpca) - ctx.design(fpca) * &b;
    let shrink: f64 = scores.iter().zip(&ctx.ts_scores).map(|(a, t)| (a - t) * (a - t)).sum();
    fit.norm_squared() + lambda * shrink
}

fn intervals_from_draws(draws: &DMatrix<f64>, alpha_levels: &[f64]) -> Vec<PointwiseInterval> {
    let (b, len) = draws.shape();
    let mut scratch = alloc::vec![0.0; b];
    let mut out: Vec<PointwiseInterval> = alpha_levels
        .iter()
        .map(|&alpha| PointwiseInterval {
            alpha,
            lower: alloc::vec![0.0; len],
            upper: alloc::vec![0.0; len],
        })
        .collect();
    for j in 0..len {
        for iv in out.iter_mut() {
            scratch.copy_from_slice(draws.column(j).as_slice());
            iv.lower[j] = math::quantile_select(&mut scratch, iv.alpha / 2.0);
            iv.upper[j] = math::quantile_select(&mut scratch, 1.0 - iv.alpha / 2.0);
        }
    }
    out
}

/// Bootstrap PLS draws on the updating grid (`B x (tau - m)`): each
/// replicate replaces the score prior with the bootstrap future scores and
/// adds the replicate's residual curve.
pub fn pls_bootstrap_draws(
    ctx: &UpdateContext,
    lambda: f64,
    fpca: &FpcaModel,
    sieve: &SieveForecast,
) -> Result<DMatrix<f64>> {
    ctx.check_model(fpca)?;
    if sieve.future_scores.ncols() != fpca.k() {
        return Err(Error::ShapeMismatch {
            what: "bootstrap score dimension",
            expected: fpca.k(),
            found: sieve.future_scores.ncols(),
        });
    }
    let system = PlsSystem::new(&ctx.design(fpca), &ctx.centered_observed(fpca), lambda)?;
    let cols = ctx.update_columns();
    let b = sieve.replicates();
    let mut draws = DMatrix::zeros(b, cols.len());
    for r in 0..b {
        let prior = sieve.future_scores.row(r).transpose();
        let scores: Vec<f64> = system.solve(&prior).iter().copied().collect();
        let curve = curve_on_update_grid(fpca, &scores, cols.clone());
        for (j, (v, c)) in curve.into_iter().zip(cols.clone()).enumerate() {
            draws[(r, j)] = v + sieve.future_residuals[(r, c)];
        }
    }
    Ok(draws)
}

/// Bootstrap PLS prediction intervals on the updating grid.
pub fn pls_interval_update(
    ctx: &UpdateContext,
    lambda: f64,
    fpca: &FpcaModel,
    sieve: &SieveForecast,
    alpha_levels: &[f64],
) -> Result<Vec<PointwiseInterval>> {
    let draws = pls_bootstrap_draws(ctx, lambda, fpca, sieve)?;
    Ok(intervals_from_draws(&draws, alpha_levels))
}

/// Criterion used to choose the shrinkage parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TuningObjective {
    /// Mean squared error of the point update.
    Msfe,
    /// Mean interval score of the bootstrap intervals at level `alpha`.
    IntervalScore { alpha: f64 },
}

/// Candidate grid `{0} U {10^j : j = -2..8}` in ascending order.
pub fn default_lambda_grid() -> Vec<f64> {
    let mut grid = alloc::vec![0.0];
    grid.extend((-2..=8).map(|j| libm::pow(10.0, j as f64)));
    grid
}

/// Tuned shrinkage per updating period.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSchedule {
    pub objective: TuningObjective,
    pub values: BTreeMap<usize, f64>,
    /// Last day index (exclusive) of the data used for tuning.
    pub tuned_through: Option<usize>,
}

impl LambdaSchedule {
    /// The same `lambda` for every listed period.
    pub fn constant(objective: TuningObjective, periods: &[usize], lambda: f64) -> Self {
        Self {
            objective,
            values: periods.iter().map(|&m| (m, lambda)).collect(),
            tuned_through: None,
        }
    }

    pub fn get(&self, m: usize) -> Option<f64> {
        self.values.get(&m).copied()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.values().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig(
                "shrinkage values must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One validation day: the model fitted on the preceding days and the
/// realized curve.
#[derive(Debug, Clone)]
pub struct ValidationDay {
    pub fpca: FpcaModel,
    pub ts_scores: Vec<f64>,
    pub actual: Vec<f64>,
    /// Needed for interval-score tuning.
    pub bootstrap: Option<SieveForecast>,
}

fn day_loss(day: &ValidationDay, m: usize, lambda: f64, objective: TuningObjective) -> Result<f64> {
    let ctx = UpdateContext::from_curve(m, &day.actual, day.ts_scores.clone())?;
    let cols = ctx.update_columns();
    let actual = &day.actual[cols];
    match objective {
        TuningObjective::Msfe => {
            let f = pls_update(&ctx, lambda, &day.fpca)?;
            Ok(f.iter().zip(actual).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / f.len() as f64)
        }
        TuningObjective::IntervalScore { alpha } => {
            let sieve = day
                .bootstrap
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("interval-score tuning needs bootstrap replicates".into()))?;
            let iv = pls_interval_update(&ctx, lambda, &day.fpca, sieve, &[alpha])?;
            let iv = &iv[0];
            Ok(actual
                .iter()
                .enumerate()
                .map(|(j, &x)| crate::evalharness::interval_score(iv.lower[j], iv.upper[j], x, alpha))
                .sum::<f64>()
                / actual.len() as f64)
        }
    }
}

/// Chooses `lambda(m)` minimizing the objective averaged over the validation
/// days; a `lambda` that fails on any day scores `+inf`, ties go to the smaller value.
pub fn tune_lambda(
    days: &[ValidationDay],
    periods: &[usize],
    grid: &[f64],
    objective: TuningObjective,
) -> Result<LambdaSchedule> {
    if days.is_empty() {
        return Err(Error::InsufficientData {
            what: "validation days",
            need: 1,
            got: 0,
        });
    }
    if grid.is_empty() || grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidConfig(
            "shrinkage grid must be non-empty, finite and non-negative".into(),
        ));
    }
    let mut sorted_grid = grid.to_vec();
    sorted_grid.sort_by(f64::total_cmp);

    let tune_one = |m: usize| -> (usize, f64) {
        let mut best = (sorted_grid[0], f64::INFINITY);
        for &lambda in &sorted_grid {
            let mut total = 0.0;
            for day in days {
                match day_loss(day, m, lambda, objective) {
                    Ok(v) if v.is_finite() => total += v,
                    _ => {
                        total = f64::INFINITY;
                        break;
                    }
                }
            }
            let avg = total / days.len() as f64;
            if avg < best.1 {
                best = (lambda, avg);
            }
        }
        (m, best.0)
    };

    #[cfg(feature = "parallel")]
    let values: BTreeMap<usize, f64> = {
        use rayon::prelude::*;
        periods
            .par_iter()
            .map(|&m| tune_one(m))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let values: BTreeMap<usize, f64> = periods.iter().map(|&m| tune_one(m)).collect();

    Ok(LambdaSchedule {
        objective,
        values,
        tuned_through: None,
    })
}

/// Function-on-function regression of the late block on the early block
/// through their principal component scores.
#[derive(Debug, Clone, PartialEq)]
pub struct FlrModel {
    m: usize,
    tau: usize,
    early: FpcaModel,
    late: FpcaModel,
    rho: DMatrix<f64>,
    ridged: bool,
}

/// Quadrature weight for a block of `points` grid values.
pub fn block_weight(points: usize) -> f64 {
    1.0 / points.saturating_sub(1).max(1) as f64
}

/// Least-squares `rho` solving `(theta^T theta) rho = theta^T vartheta`; adds
/// a ridge of `FLR_RIDGE * trace` when the cross-product is singular and
/// reports whether it did.
pub fn estimate_rho(theta: &DMatrix<f64>, vartheta: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let gram = theta.transpose() * theta;
    let rhs = theta.transpose() * vartheta;
    let (values, _) = linalg::sorted_symmetric_eigen(gram.clone());
    let lead = values.first().copied().unwrap_or(0.0);
    let last = values.last().copied().unwrap_or(0.0);
    let well_posed = lead > 0.0 && last > lead / MAX_OLS_CONDITION;
    if well_posed {
        if let Some(ch) = gram.clone().cholesky() {
            return (ch.solve(&rhs), false);
        }
    }
    let trace = gram.trace();
    let ridge = if trace > 0.0 { FLR_RIDGE * trace } else { FLR_RIDGE };
    let mut reg = gram;
    for i in 0..reg.nrows() {
        reg[(i, i)] += ridge;
    }
    let rho = reg
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .unwrap_or_else(|| DMatrix::zeros(theta.ncols(), vartheta.ncols()));
    (rho, true)
}

/// Fits the block regression for split period `m` on the rows of `curves`.
pub fn flr_fit(curves: &DMatrix<f64>, m: usize) -> Result<FlrModel> {
    FlrModel::fit(curves, m)
}

impl FlrModel {
    pub fn fit(curves: &DMatrix<f64>, m: usize) -> Result<Self> {
        let tau = curves.ncols() + 1;
        check_period(m, tau)?;
        let n = curves.nrows();
        let early_pts = m - 1;
        let late_pts = tau - m;
        let early_curves = curves.columns(0, early_pts).into_owned();
        let late_curves = curves.columns(early_pts, late_pts).into_owned();
        let early = FpcaModel::fit(&early_curves, block_weight(early_pts), ComponentSelection::EigenRatio)?;
        let late = FpcaModel::fit(&late_curves, block_weight(late_pts), ComponentSelection::EigenRatio)?;
        let (r, s) = (early.k(), late.k());
        if n < r + s + 1 {
            return Err(Error::InsufficientData {
                what: "curves for block regression",
                need: r + s + 1,
                got: n,
            });
        }
        let (rho, ridged) = estimate_rho(&early.retained_scores(), &late.retained_scores());
        Ok(Self {
            m,
            tau,
            early,
            late,
            rho,
            ridged,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// Early-block component count `R`.
    pub fn r(&self) -> usize {
        self.early.k()
    }

    /// Late-block component count `S`.
    pub fn s(&self) -> usize {
        self.late.k()
    }

    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }

    pub fn early(&self) -> &FpcaModel {
        &self.early
    }

    pub fn late(&self) -> &FpcaModel {
        &self.late
    }

    /// Whether the ridge floor was needed to estimate `rho`.
    pub fn is_ridged(&self) -> bool {
        self.ridged
    }

    /// Early-block scores of an observed block `u_2..u_m`.
    pub fn early_scores(&self, observed: &[f64]) -> Result<Vec<f64>> {
        self.early.project_scores(observed)
    }

    fn predict_with(&self, theta: &[f64], rho: &DMatrix<f64>) -> Vec<f64> {
        let theta = DVector::from_column_slice(theta);
        let late_scores: Vec<f64> = (rho.transpose() * theta).iter().copied().collect();
        // Length already checked by construction.
        self.late.reconstruct(&late_scores).unwrap_or_default()
    }

    /// Forecast of the late block `u_{m+1}..u_tau` from the observed early block.
    pub fn update(&self, observed: &[f64]) -> Result<Vec<f64>> {
        let theta = self.early_scores(observed)?;
        Ok(self.predict_with(&theta, &self.rho))
    }

    /// Bootstrap `rho*` from a pseudo-series projected on this model's
    /// block means and eigenfunctions.
    fn bootstrap_rho(&self, pseudo: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
        let early_pts = self.m - 1;
        let late_pts = self.tau - self.m;
        let project = |block: DMatrix<f64>, model: &FpcaModel| {
            let phi = model.retained_eigenfunctions();
            let mean = DVector::from_column_slice(model.mean());
            let offset = (phi.transpose() * mean).transpose();
            let mut scores = block * &phi;
            for mut row in scores.row_iter_mut() {
                row -= &offset;
            }
            scores * model.quad_weight()
        };
        let theta = project(pseudo.columns(0, early_pts).into_owned(), &self.early);
        let vartheta = project(pseudo.columns(early_pts, late_pts).into_owned(), &self.late);
        estimate_rho(&theta, &vartheta)
    }
}

/// Forecast of the late block from the observed early block.
pub fn flr_update(model: &FlrModel, observed: &[f64]) -> Result<Vec<f64>> {
    model.update(observed)
}

/// Bootstrap FLR draws for several split periods sharing one set of
/// pseudo-series. `observed` is the full current curve; each model only
/// reads its own early block. Returns one `B x (tau - m)` matrix per model
/// and the number of replicates that needed the ridge floor.
pub fn flr_bootstrap_draws(
    models: &[FlrModel],
    observed: &[f64],
    boot: &SieveBootstrap<'_>,
    sieve: &SieveForecast,
) -> Result<(Vec<DMatrix<f64>>, usize)> {
    let b = sieve.replicates();
    let mut thetas = Vec::with_capacity(models.len());
    let mut draws = Vec::with_capacity(models.len());
    for model in models {
        if observed.len() < model.m - 1 {
            return Err(Error::ShapeMismatch {
                what: "observed block",
                expected: model.m - 1,
                found: observed.len(),
            });
        }
        thetas.push(model.early_scores(&observed[..model.m - 1])?);
        draws.push(DMatrix::zeros(b, model.tau - model.m));
    }

    let per_replicate = |r: usize| -> Result<(Vec<Vec<f64>>, usize)> {
        let pseudo = boot.replicate(r)?;
        let mut ridged = 0;
        let rows = models
            .iter()
            .zip(&thetas)
            .map(|(model, theta)| {
                let (rho, ridge) = model.bootstrap_rho(&pseudo.curves);
                ridged += ridge as usize;
                let mut f = model.predict_with(theta, &rho);
                for (v, c) in f.iter_mut().zip(update_columns(model.m, model.tau)) {
                    *v += sieve.future_residuals[(r, c)];
                }
                f
            })
            .collect();
        Ok((rows, ridged))
    };

    #[cfg(feature = "parallel")]
    let results: Vec<Result<(Vec<Vec<f64>>, usize)>> = {
        use rayon::prelude::*;
        (0..b).into_par_iter().map(per_replicate).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(Vec<Vec<f64>>, usize)>> = (0..b).map(per_replicate).collect();

    let mut ridged = 0;
    for (r, res) in results.into_iter().enumerate() {
        let (rows, rr) = res?;
        ridged += rr;
        for (d, row) in draws.iter_mut().zip(rows) {
            for (j, v) in row.into_iter().enumerate() {
                d[(r, j)] = v;
            }
        }
    }
    Ok((draws, ridged))
}

/// Bootstrap FLR prediction intervals for one split period.
pub fn flr_interval_update(
    model: &FlrModel,
    observed: &[f64],
    boot: &SieveBootstrap<'_>,
    sieve: &SieveForecast,
    alpha_levels: &[f64],
) -> Result<Vec<PointwiseInterval>> {
    let (draws, _) = flr_bootstrap_draws(core::slice::from_ref(model), observed, boot, sieve)?;
    Ok(intervals_from_draws(&draws[0], alpha_levels))
}

/// Empirical quantile intervals of bootstrap draws, one column per grid point.
pub fn draws_to_intervals(draws: &DMatrix<f64>, alpha_levels: &[f64]) -> Vec<PointwiseInterval> {
    intervals_from_draws(draws, alpha_levels)
}
