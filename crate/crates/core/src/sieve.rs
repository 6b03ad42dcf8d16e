//! Sieve bootstrap prediction intervals and uniform bands for the next curve.
//!
//! Each replicate regenerates a pseudo functional time series by running the
//! score VAR backward in time with transferred innovations, re-attaches
//! resampled residual curves, and keeps the observed last `p` curves so the
//! replicate conditions on the same recent history as the data. A FAR(1)
//! predictor fitted to the pseudo-series then gives one draw of the
//! prediction error for day `n + 1`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fpca::{ComponentSelection, FpcaModel};
use crate::gridcurves::FunctionalTimeSeries;
use crate::math;
use crate::rng::stream_rng;
use crate::varmodel::{backward_innovation_transfer, forecast_scores, VarModel};

/// Floor applied to the bootstrap error standard deviation when normalizing.
pub const SD_FLOOR: f64 = 1e-12;
/// Below this many replicates quantiles are flagged as unstable.
pub const MIN_STABLE_REPLICATES: usize = 50;

/// Which forecast the bootstrap intervals and bands are centered on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntervalCenter {
    /// FAR(1) forecast of the original series, the same predictor used per replicate.
    #[default]
    Far1,
    /// FPCA + VAR score forecast.
    TimeSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    /// Number of bootstrap replicates `B`.
    pub replicates: usize,
    pub seed: u64,
    /// Significance levels; `0.2` gives 80% intervals.
    pub alpha_levels: Vec<f64>,
    pub center: IntervalCenter,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 400,
            seed: 0,
            alpha_levels: alloc::vec![0.2, 0.05],
            center: IntervalCenter::Far1,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("bootstrap needs at least one replicate".into()));
        }
        if self.alpha_levels.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::InvalidConfig("significance levels must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// FAR(1) predictor `X_{n+1} = mean + g[X_n - mean]` with `g` estimated as the
/// lag-one autocovariance operator composed with a truncated inverse of the
/// covariance operator (both with divisor `n`).
#[derive(Debug, Clone, PartialEq)]
pub struct Far1Predictor {
    mean: Vec<f64>,
    eigenfunctions: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    /// `(1/n) sum_t c_{t+1} s_t^T` over the retained components.
    response: DMatrix<f64>,
    quad_weight: f64,
    last: Vec<f64>,
}

/// Fits the FAR(1) predictor to a series.
pub fn far1_fit(fts: &FunctionalTimeSeries) -> Result<Far1Predictor> {
    Far1Predictor::fit(fts.values(), fts.grid().quad_weight())
}

impl Far1Predictor {
    pub fn fit(curves: &DMatrix<f64>, quad_weight: f64) -> Result<Self> {
        let n = curves.nrows();
        if n < 3 {
            return Err(Error::InsufficientData {
                what: "curves for FAR(1)",
                need: 3,
                got: n,
            });
        }
        // The FPCA covariance is the lag-zero operator; its eigenvalue-ratio
        // count is the truncation level of the inverse.
        let pca = FpcaModel::fit(curves, quad_weight, ComponentSelection::EigenRatio)?;
        let j = pca.k();
        let eigenfunctions = pca.eigenfunctions().columns(0, j).into_owned();
        let eigenvalues = pca.eigenvalues()[..j].to_vec();
        let scores = pca.scores();
        let mean = pca.mean().to_vec();
        let len = mean.len();

        let mut response = DMatrix::zeros(len, j);
        for t in 0..n - 1 {
            for c in 0..j {
                let s = scores[(t, c)];
                if s == 0.0 {
                    continue;
                }
                for i in 0..len {
                    response[(i, c)] += (curves[(t + 1, i)] - mean[i]) * s;
                }
            }
        }
        response /= n as f64;
        let last = curves.row(n - 1).iter().copied().collect();
        Ok(Self {
            mean,
            eigenfunctions,
            eigenvalues,
            response,
            quad_weight,
            last,
        })
    }

    /// Number of components kept in the regularized inverse.
    pub fn truncation(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Applies the estimated operator to a centered curve.
    pub fn apply(&self, centered: &[f64]) -> Vec<f64> {
        let mut coef = DVector::zeros(self.truncation());
        for (c, &lambda) in self.eigenvalues.iter().enumerate() {
            if lambda <= 0.0 {
                continue;
            }
            let s: f64 = centered
                .iter()
                .zip(self.eigenfunctions.column(c).iter())
                .map(|(x, p)| x * p)
                .sum::<f64>()
                * self.quad_weight;
            coef[c] = s / lambda;
        }
        (&self.response * coef).iter().copied().collect()
    }

    /// Forecast of the curve following `curve`.
    pub fn predict(&self, curve: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = curve.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        let g = self.apply(&centered);
        self.mean.iter().zip(g).map(|(m, v)| m + v).collect()
    }

    /// Forecast of the day after the last fitted curve.
    pub fn predict_next(&self) -> Vec<f64> {
        self.predict(&self.last)
    }

    /// The operator as a grid matrix acting on curve values.
    pub fn operator_matrix(&self) -> DMatrix<f64> {
        let mut scaled = self.eigenfunctions.clone();
        for (c, &lambda) in self.eigenvalues.iter().enumerate() {
            let f = if lambda > 0.0 { self.quad_weight / lambda } else { 0.0 };
            scaled.column_mut(c).scale_mut(f);
        }
        &self.response * scaled.transpose()
    }
}

/// One-step VAR forecast of the retained scores.
pub fn ts_score_forecast(fpca: &FpcaModel, var: &VarModel) -> Result<Vec<f64>> {
    let scores = fpca.retained_scores();
    if scores.ncols() != var.k() {
        return Err(Error::ShapeMismatch {
            what: "VAR dimension vs retained components",
            expected: fpca.k(),
            found: var.k(),
        });
    }
    let f = forecast_scores(var, &scores, 1)?;
    Ok(f.row(0).iter().copied().collect())
}

/// Point forecast `mean + sum_k b_{n+1|n,k} phi_k`.
pub fn ts_point_forecast(fpca: &FpcaModel, var: &VarModel) -> Result<Vec<f64>> {
    fpca.reconstruct(&ts_score_forecast(fpca, var)?)
}

/// One bootstrap replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSeries {
    /// Pseudo curves for days `1..=n`.
    pub curves: DMatrix<f64>,
    /// Bootstrap future curve for day `n + 1`.
    pub future: Vec<f64>,
    /// Bootstrap future scores from the forward recursion.
    pub future_scores: Vec<f64>,
    /// Residual curve attached to the future curve.
    pub future_residual: Vec<f64>,
}

/// Precomputed resampling pools for one fitted series.
#[derive(Debug, Clone)]
pub struct SieveBootstrap<'a> {
    curves: &'a DMatrix<f64>,
    fpca: &'a FpcaModel,
    var: &'a VarModel,
    seed: u64,
    scores: DMatrix<f64>,
    phi: DMatrix<f64>,
    innovation_pool: DMatrix<f64>,
    residual_pool: DMatrix<f64>,
}

impl<'a> SieveBootstrap<'a> {
    pub fn new(fts: &'a FunctionalTimeSeries, fpca: &'a FpcaModel, var: &'a VarModel, seed: u64) -> Result<Self> {
        let curves = fts.values();
        if curves.nrows() != fpca.n() {
            return Err(Error::ShapeMismatch {
                what: "series length vs FPCA",
                expected: fpca.n(),
                found: curves.nrows(),
            });
        }
        if var.k() != fpca.k() {
            return Err(Error::ShapeMismatch {
                what: "VAR dimension vs retained components",
                expected: fpca.k(),
                found: var.k(),
            });
        }
        if var.n() != fpca.n() {
            return Err(Error::ShapeMismatch {
                what: "VAR sample size vs FPCA",
                expected: fpca.n(),
                found: var.n(),
            });
        }
        var.psi()?;
        Ok(Self {
            curves,
            fpca,
            var,
            seed,
            scores: fpca.retained_scores(),
            phi: fpca.retained_eigenfunctions(),
            innovation_pool: var.centered_forward_residuals(),
            residual_pool: fpca.centered_residuals(),
        })
    }

    fn draw_row<R: Rng>(pool: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
        pool.row(rng.random_range(0..pool.nrows())).transpose()
    }

    fn curve_from(&self, scores: &DVector<f64>, residual: &DVector<f64>) -> DVector<f64> {
        let mut x = &self.phi * scores + residual;
        for (v, m) in x.iter_mut().zip(self.fpca.mean()) {
            *v += m;
        }
        x
    }

    /// Replicate `index`; deterministic in `(seed, index)`.
    pub fn replicate(&self, index: usize) -> Result<PseudoSeries> {
        let mut rng = stream_rng(self.seed, index as u64);
        let n = self.curves.nrows();
        let p = self.var.p();
        let k = self.var.k();
        let len = n - p;

        let mut eps = DMatrix::zeros(len, k);
        for t in 0..len {
            eps.row_mut(t)
                .copy_from(&Self::draw_row(&self.innovation_pool, &mut rng).transpose());
        }
        let eta = backward_innovation_transfer(self.var, &eps, &self.innovation_pool, &mut rng)?;

        let mut beta = DMatrix::zeros(n, k);
        beta.rows_mut(len, p).copy_from(&self.scores.rows(len, p));
        for t in (0..len).rev() {
            let mut b = eta.row(t).transpose();
            for (j, bj) in self.var.backward().iter().enumerate() {
                b += bj * beta.row(t + j + 1).transpose();
            }
            beta.row_mut(t).copy_from(&b.transpose());
        }

        let mut curves = self.curves.clone();
        for t in 0..len {
            let e = Self::draw_row(&self.residual_pool, &mut rng);
            let x = self.curve_from(&beta.row(t).transpose(), &e);
            curves.row_mut(t).copy_from(&x.transpose());
        }

        let history: Vec<DVector<f64>> = (len..n).map(|t| self.scores.row(t).transpose()).collect();
        let future_scores = self.var.predict_next(&history) + Self::draw_row(&self.innovation_pool, &mut rng);
        let future_residual = Self::draw_row(&self.residual_pool, &mut rng);
        let future = self.curve_from(&future_scores, &future_residual);

        Ok(PseudoSeries {
            curves,
            future: future.iter().copied().collect(),
            future_scores: future_scores.iter().copied().collect(),
            future_residual: future_residual.iter().copied().collect(),
        })
    }
}

/// Replicate `index` of the sieve bootstrap for a fitted series.
pub fn generate_pseudo_series(
    fts: &FunctionalTimeSeries,
    fpca: &FpcaModel,
    var: &VarModel,
    cfg: &BootstrapConfig,
    index: usize,
) -> Result<PseudoSeries> {
    SieveBootstrap::new(fts, fpca, var, cfg.seed)?.replicate(index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseInterval {
    pub alpha: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformBand {
    pub alpha: f64,
    /// `(1 - alpha)` quantile of the sup-statistic.
    pub radius_factor: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SieveFlags {
    /// Grid points whose bootstrap error SD was zero and got floored.
    pub zero_sd_points: usize,
    /// Fewer than [`MIN_STABLE_REPLICATES`] replicates.
    pub few_replicates: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SieveForecast {
    /// Center of the intervals and bands.
    pub point: Vec<f64>,
    /// FPCA + VAR point forecast.
    pub ts_point: Vec<f64>,
    /// FPCA + VAR score forecast.
    pub ts_scores: Vec<f64>,
    /// Seed of the replicate streams.
    pub seed: u64,
    /// `B x (tau - 1)` bootstrap future curves.
    pub replicates_future: DMatrix<f64>,
    /// `B x (tau - 1)` per-replicate FAR(1) forecasts.
    pub replicates_pred: DMatrix<f64>,
    /// `B x K` bootstrap future scores.
    pub future_scores: DMatrix<f64>,
    /// `B x (tau - 1)` residual curves attached to the future curves.
    pub future_residuals: DMatrix<f64>,
    pub error_sd: Vec<f64>,
    /// Sup-statistic of each replicate.
    pub sup_statistics: Vec<f64>,
    pub pointwise: Vec<PointwiseInterval>,
    pub bands: Vec<UniformBand>,
    pub flags: SieveFlags,
}

impl SieveForecast {
    pub fn replicates(&self) -> usize {
        self.replicates_future.nrows()
    }

    /// Bootstrap prediction errors `future - pred`.
    pub fn errors(&self) -> DMatrix<f64> {
        &self.replicates_future - &self.replicates_pred
    }

    pub fn pointwise_at(&self, alpha: f64) -> Option<&PointwiseInterval> {
        self.pointwise.iter().find(|i| (i.alpha - alpha).abs() < 1e-12)
    }

    pub fn band_at(&self, alpha: f64) -> Option<&UniformBand> {
        self.bands.iter().find(|b| (b.alpha - alpha).abs() < 1e-12)
    }
}

/// Pointwise intervals and uniform bands from bootstrap errors around `point`.
pub fn intervals_from_errors(
    point: &[f64],
    errors: &DMatrix<f64>,
    alpha_levels: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<PointwiseInterval>, Vec<UniformBand>, usize) {
    let (b, len) = errors.shape();
    let error_sd: Vec<f64> = (0..len).map(|i| math::sample_sd(errors.column(i).as_slice())).collect();
    let zero_sd_points = error_sd.iter().filter(|s| **s == 0.0).count();

    let sorted_cols: Vec<Vec<f64>> = (0..len)
        .map(|i| {
            let mut col: Vec<f64> = errors.column(i).iter().map(|e| point[i] + e).collect();
            col.sort_by(f64::total_cmp);
            col
        })
        .collect();
    let pointwise = alpha_levels
        .iter()
        .map(|&alpha| PointwiseInterval {
            alpha,
            lower: sorted_cols
                .iter()
                .map(|c| math::quantile_sorted(c, alpha / 2.0))
                .collect(),
            upper: sorted_cols
                .iter()
                .map(|c| math::quantile_sorted(c, 1.0 - alpha / 2.0))
                .collect(),
        })
        .collect();

    let sup_statistics: Vec<f64> = (0..b)
        .map(|r| {
            (0..len)
                .map(|i| (errors[(r, i)] / error_sd[i].max(SD_FLOOR)).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let mut sorted_sup = sup_statistics.clone();
    sorted_sup.sort_by(f64::total_cmp);
    let bands = alpha_levels
        .iter()
        .map(|&alpha| {
            let q = math::quantile_sorted(&sorted_sup, 1.0 - alpha);
            UniformBand {
                alpha,
                radius_factor: q,
                lower: point.iter().zip(&error_sd).map(|(p, s)| p - q * s).collect(),
                upper: point.iter().zip(&error_sd).map(|(p, s)| p + q * s).collect(),
            }
        })
        .collect();
    (error_sd, sup_statistics, pointwise, bands, zero_sd_points)
}

struct ReplicateOutput {
    future: Vec<f64>,
    pred: Vec<f64>,
    scores: Vec<f64>,
    residual: Vec<f64>,
}

fn run_replicate(boot: &SieveBootstrap<'_>, index: usize, w: f64) -> Result<ReplicateOutput> {
    let pseudo = boot.replicate(index)?;
    let far = Far1Predictor::fit(&pseudo.curves, w)?;
    Ok(ReplicateOutput {
        pred: far.predict_next(),
        future: pseudo.future,
        scores: pseudo.future_scores,
        residual: pseudo.future_residual,
    })
}

/// Sieve bootstrap forecast distribution for day `n + 1`.
pub fn sieve_prediction(
    fts: &FunctionalTimeSeries,
    fpca: &FpcaModel,
    var: &VarModel,
    cfg: &BootstrapConfig,
) -> Result<SieveForecast> {
    cfg.validate()?;
    let boot = SieveBootstrap::new(fts, fpca, var, cfg.seed)?;
    let w = fts.grid().quad_weight();
    let ts_scores = ts_score_forecast(fpca, var)?;
    let ts_point = fpca.reconstruct(&ts_scores)?;
    let point = match cfg.center {
        IntervalCenter::Far1 => Far1Predictor::fit(fts.values(), w)?.predict_next(),
        IntervalCenter::TimeSeries => ts_point.clone(),
    };

    #[cfg(feature = "parallel")]
    let outputs: Vec<Result<ReplicateOutput>> = {
        use rayon::prelude::*;
        (0..cfg.replicates)
            .into_par_iter()
            .map(|b| run_replicate(&boot, b, w))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outputs: Vec<Result<ReplicateOutput>> = (0..cfg.replicates).map(|b| run_replicate(&boot, b, w)).collect();

    let len = fpca.curve_len();
    let b = cfg.replicates;
    let k = fpca.k();
    let mut replicates_future = DMatrix::zeros(b, len);
    let mut replicates_pred = DMatrix::zeros(b, len);
    let mut future_scores = DMatrix::zeros(b, k);
    let mut future_residuals = DMatrix::zeros(b, len);
    for (r, out) in outputs.into_iter().enumerate() {
        let out = out?;
        for i in 0..len {
            replicates_future[(r, i)] = out.future[i];
            replicates_pred[(r, i)] = out.pred[i];
            future_residuals[(r, i)] = out.residual[i];
        }
        for c in 0..k {
            future_scores[(r, c)] = out.scores[c];
        }
    }

    let errors = &replicates_future - &replicates_pred;
    let (error_sd, sup_statistics, pointwise, bands, zero_sd_points) =
        intervals_from_errors(&point, &errors, &cfg.alpha_levels);
    Ok(SieveForecast {
        point,
        ts_point,
        ts_scores,
        seed: cfg.seed,
        replicates_future,
        replicates_pred,
        future_scores,
        future_residuals,
        error_sd,
        sup_statistics,
        pointwise,
        bands,
        flags: SieveFlags {
            zero_sd_points,
            few_replicates: b < MIN_STABLE_REPLICATES,
        },
    })
}
