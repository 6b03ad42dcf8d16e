//! Functional principal component analysis on a uniform grid.
//!
//! The covariance operator of the centered curves (divisor `n`) is
//! discretized with the rectangle rule of weight `w`, so eigenfunctions are
//! orthonormal under `<f, g> = w * sum_i f(u_i) g(u_i)` and the eigenvalues are
//! those of the integral operator, not of the raw sample covariance matrix.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gridcurves::{check_finite, FunctionalTimeSeries};
use crate::linalg::{center_columns, sorted_symmetric_eigen};
use crate::math;

/// Eigenvalues below this fraction of the leading one are treated as zero.
pub const RELATIVE_EIGEN_FLOOR: f64 = 1e-12;

/// How the retained component count `K` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ComponentSelection {
    /// Eigenvalue-ratio criterion, see [`select_k`].
    #[default]
    EigenRatio,
    /// Smallest `k` whose cumulative share of variance reaches the threshold.
    CumulativeVariance(f64),
    /// A fixed count, capped at the number of available components.
    Fixed(usize),
}

/// Result of a component-count selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KSelection {
    pub k: usize,
    /// Set when every eigenvalue is zero.
    pub degenerate: bool,
}

/// Eigenvalue-ratio choice of the number of components.
///
/// Minimizes, over `1 <= k <= k_max`,
/// `(l_{k+1} / l_k) * 1(l_k / l_1 >= v) + 1(l_k / l_1 < v)` with
/// `v = 1 / ln(max(l_1, n))` and `k_max = #{k : l_k >= sum(l) / n}`.
/// A ratio that would need an eigenvalue past the end of `eigenvalues` is
/// taken as 1. Ties go to the smallest `k`.
pub fn select_k(eigenvalues: &[f64], n: usize) -> KSelection {
    let first = eigenvalues.first().copied().unwrap_or(0.0);
    if !(first > 0.0) {
        return KSelection { k: 1, degenerate: true };
    }
    let threshold = 1.0 / math::ln(first.max(n as f64));
    let total: f64 = eigenvalues.iter().filter(|v| **v > 0.0).sum();
    let k_max = eigenvalues.iter().filter(|&&v| v >= total / n as f64).count().max(1);

    let mut best = (1usize, f64::INFINITY);
    for k in 1..=k_max {
        let current = eigenvalues[k - 1];
        let objective = if current / first >= threshold {
            match eigenvalues.get(k) {
                Some(&next) => next.max(0.0) / current,
                None => 1.0,
            }
        } else {
            1.0
        };
        if objective < best.1 {
            best = (k, objective);
        }
    }
    KSelection {
        k: best.0,
        degenerate: false,
    }
}

/// Smallest `k` whose leading eigenvalues explain at least `share` of the total.
pub fn select_k_cumulative(eigenvalues: &[f64], share: f64) -> KSelection {
    let total: f64 = eigenvalues.iter().filter(|v| **v > 0.0).sum();
    if !(total > 0.0) {
        return KSelection { k: 1, degenerate: true };
    }
    let mut acc = 0.0;
    for (i, v) in eigenvalues.iter().enumerate() {
        acc += v.max(0.0);
        if acc / total >= share - 1e-15 {
            return KSelection {
                k: i + 1,
                degenerate: false,
            };
        }
    }
    KSelection {
        k: eigenvalues.len().max(1),
        degenerate: false,
    }
}

/// Fitted mean, eigenpairs, scores and truncation residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct FpcaModel {
    mean: Vec<f64>,
    /// Grid samples of the eigenfunctions, one column per component (`K_full` columns).
    eigenfunctions: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    /// Full clipped spectrum of the discretized covariance operator.
    spectrum: Vec<f64>,
    scores: DMatrix<f64>,
    k: usize,
    residuals: DMatrix<f64>,
    quad_weight: f64,
    degenerate: bool,
}

/// FPCA of a functional time series using its grid weight and the
/// eigenvalue-ratio selector.
pub fn fit_fpca(fts: &FunctionalTimeSeries) -> Result<FpcaModel> {
    FpcaModel::fit(fts.values(), fts.grid().quad_weight(), ComponentSelection::EigenRatio)
}

impl FpcaModel {
    /// FPCA of the rows of `curves` under quadrature weight `quad_weight`.
    pub fn fit(curves: &DMatrix<f64>, quad_weight: f64, selection: ComponentSelection) -> Result<Self> {
        let n = curves.nrows();
        if n < 2 {
            return Err(Error::InsufficientData {
                what: "curves for FPCA",
                need: 2,
                got: n,
            });
        }
        check_finite("curves", curves)?;
        let (centered, mean) = center_columns(curves);
        let cov = (centered.transpose() * &centered) * (quad_weight / n as f64);
        let (raw_values, vectors) = sorted_symmetric_eigen(cov);

        // Centering constant curves leaves rounding noise of order
        // eps * |mean|; treat a spectrum at that level as zero.
        let level: f64 = mean.iter().map(|m| m * m).sum::<f64>() * quad_weight;
        let lead = if raw_values[0] > 1e-20 * level {
            raw_values[0]
        } else {
            0.0
        };
        let max_components = (n - 1).min(curves.ncols());
        let spectrum: Vec<f64> = raw_values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if lead > 0.0 && v >= RELATIVE_EIGEN_FLOOR * lead && i < max_components {
                    v
                } else {
                    0.0
                }
            })
            .collect();
        let positive = spectrum.iter().take_while(|v| **v > 0.0).count();
        let degenerate = positive == 0;
        let k_full = positive.max(1);

        let scale = 1.0 / math::sqrt(quad_weight);
        let mut eigenfunctions = vectors.columns(0, k_full).into_owned() * scale;
        for mut col in eigenfunctions.column_iter_mut() {
            if needs_flip(col.as_slice()) {
                col.neg_mut();
            }
        }
        let eigenvalues = spectrum[..k_full].to_vec();
        let scores = (&centered * &eigenfunctions) * quad_weight;

        let k = match selection {
            ComponentSelection::EigenRatio => select_k(&spectrum, n).k,
            ComponentSelection::CumulativeVariance(share) => select_k_cumulative(&spectrum, share).k,
            ComponentSelection::Fixed(k) => k.max(1),
        }
        .min(k_full);

        let residuals = truncation_residuals(&centered, &scores, &eigenfunctions, k);
        Ok(Self {
            mean,
            eigenfunctions,
            eigenvalues,
            spectrum,
            scores,
            k,
            residuals,
            quad_weight,
            degenerate,
        })
    }

    /// Same fit truncated at a different `k` (clamped to `1..=K_full`).
    pub fn with_k(&self, k: usize) -> Self {
        let k = k.clamp(1, self.k_full());
        let centered =
            &self.residuals + self.scores.columns(0, self.k) * self.eigenfunctions.columns(0, self.k).transpose();
        let residuals = truncation_residuals(&centered, &self.scores, &self.eigenfunctions, k);
        Self {
            k,
            residuals,
            ..self.clone()
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// All `K_full` eigenfunctions as grid columns.
    pub fn eigenfunctions(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    /// The first `K` eigenfunctions.
    pub fn retained_eigenfunctions(&self) -> DMatrix<f64> {
        self.eigenfunctions.columns(0, self.k).into_owned()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Scores on all `K_full` components.
    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }

    /// Scores on the first `K` components (`n x K`).
    pub fn retained_scores(&self) -> DMatrix<f64> {
        self.scores.columns(0, self.k).into_owned()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn k_full(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn residuals(&self) -> &DMatrix<f64> {
        &self.residuals
    }

    pub fn quad_weight(&self) -> f64 {
        self.quad_weight
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }

    pub fn curve_len(&self) -> usize {
        self.mean.len()
    }

    /// True when every eigenvalue is zero (all curves identical).
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Scores of `curve` on the first `K` components.
    pub fn project_scores(&self, curve: &[f64]) -> Result<Vec<f64>> {
        if curve.len() != self.mean.len() {
            return Err(Error::ShapeMismatch {
                what: "curve length",
                expected: self.mean.len(),
                found: curve.len(),
            });
        }
        Ok((0..self.k)
            .map(|k| {
                let phi = self.eigenfunctions.column(k);
                self.quad_weight
                    * curve
                        .iter()
                        .zip(&self.mean)
                        .zip(phi.iter())
                        .map(|((x, m), p)| (x - m) * p)
                        .sum::<f64>()
            })
            .collect())
    }

    /// Mean plus the score-weighted eigenfunctions; `scores` may have any
    /// length up to `K_full`.
    pub fn reconstruct(&self, scores: &[f64]) -> Result<Vec<f64>> {
        if scores.len() > self.k_full() {
            return Err(Error::ShapeMismatch {
                what: "score vector",
                expected: self.k_full(),
                found: scores.len(),
            });
        }
        let mut out = self.mean.clone();
        for (k, s) in scores.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(self.eigenfunctions.column(k).iter()) {
                *o += s * p;
            }
        }
        Ok(out)
    }

    /// Residual pool `{e_t - e_bar}` used by the bootstrap (`n x (tau - 1)`).
    pub fn centered_residuals(&self) -> DMatrix<f64> {
        center_columns(&self.residuals).0
    }
}

fn truncation_residuals(
    centered: &DMatrix<f64>,
    scores: &DMatrix<f64>,
    eigenfunctions: &DMatrix<f64>,
    k: usize,
) -> DMatrix<f64> {
    centered - scores.columns(0, k) * eigenfunctions.columns(0, k).transpose()
}

/// Sign rule: non-negative integral, or a positive first non-negligible
/// coordinate when the integral vanishes.
fn needs_flip(phi: &[f64]) -> bool {
    let sum: f64 = phi.iter().sum();
    let abs_sum: f64 = phi.iter().map(|v| v.abs()).sum();
    if sum.abs() > 1e-10 * abs_sum {
        return sum < 0.0;
    }
    let largest = phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    phi.iter().find(|v| v.abs() > 1e-12 * largest).is_some_and(|v| *v < 0.0)
}
