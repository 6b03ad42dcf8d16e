//! Vector autoregressions on principal component scores.
//!
//! Both the forward model `b_t = sum_j A_j b_{t-j} + e_t` and its mirror
//! image `b_t = sum_j B_j b_{t+j} + h_t` are fitted by multivariate least
//! squares without intercept. The backward model drives the sieve bootstrap,
//! which also needs forward innovations mapped to backward ones through
//! `h_t = B(L^-1) A(L)^-1 e_t`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{center_columns, least_squares, log_det_regularized, spectral_radius};

/// Designs with a larger condition number are rejected.
pub const MAX_DESIGN_CONDITION: f64 = 1e12;
/// Companion spectral radius at or above which the bootstrap refuses a model.
pub const STATIONARITY_LIMIT: f64 = 0.999;
/// Frobenius-norm tolerance for truncating the MA expansion.
pub const PSI_TOLERANCE: f64 = 1e-10;
/// Hard cap on the MA expansion length.
pub const PSI_MAX_TERMS: usize = 200;
/// Default upper bound of the order search.
pub const DEFAULT_P_MAX: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    p: usize,
    n: usize,
    forward: Vec<DMatrix<f64>>,
    forward_residuals: DMatrix<f64>,
    backward: Vec<DMatrix<f64>>,
    backward_residuals: DMatrix<f64>,
    sigma: DMatrix<f64>,
    spectral_radius: f64,
    psi: Option<Vec<DMatrix<f64>>>,
}

/// Fits forward and backward VAR(`p`) models to an `n x K` score matrix.
pub fn fit_var(scores: &DMatrix<f64>, p: usize) -> Result<VarModel> {
    VarModel::fit(scores, p)
}

impl VarModel {
    pub fn fit(scores: &DMatrix<f64>, p: usize) -> Result<Self> {
        let (n, k) = scores.shape();
        if p == 0 {
            return Err(Error::InvalidConfig("VAR order must be at least 1".into()));
        }
        if n <= p || n - p <= k * p {
            return Err(Error::InsufficientData {
                what: "score observations for VAR order",
                need: k * p + p + 1,
                got: n,
            });
        }
        let rows = n - p;

        // Forward: response b_t (t = p..n), regressors b_{t-1}, ..., b_{t-p}.
        let y = scores.rows(p, rows).into_owned();
        let x = DMatrix::from_fn(rows, k * p, |r, c| {
            let (lag, comp) = (c / k + 1, c % k);
            scores[(r + p - lag, comp)]
        });
        let coef = least_squares(&x, &y, MAX_DESIGN_CONDITION)?;
        let forward = split_coefficients(&coef, k, p);
        let forward_residuals = &y - &x * &coef;

        // Backward: response b_t (t = 0..n-p), regressors b_{t+1}, ..., b_{t+p}.
        let yb = scores.rows(0, rows).into_owned();
        let xb = DMatrix::from_fn(rows, k * p, |r, c| {
            let (lead, comp) = (c / k + 1, c % k);
            scores[(r + lead, comp)]
        });
        let coef_b = least_squares(&xb, &yb, MAX_DESIGN_CONDITION)?;
        let backward = split_coefficients(&coef_b, k, p);
        let backward_residuals = &yb - &xb * &coef_b;

        let sigma = forward_residuals.transpose() * &forward_residuals / rows as f64;
        let radius = spectral_radius(&companion(&forward));
        let psi = if radius < STATIONARITY_LIMIT {
            ma_coefficients(&forward).ok()
        } else {
            None
        };

        Ok(Self {
            p,
            n,
            forward,
            forward_residuals,
            backward,
            backward_residuals,
            sigma,
            spectral_radius: radius,
            psi,
        })
    }

    /// Model with given coefficient matrices and no data, for forecasting
    /// and for driving the innovation transfer in tests and simulations.
    pub fn from_coefficients(forward: Vec<DMatrix<f64>>, backward: Vec<DMatrix<f64>>) -> Result<Self> {
        let p = forward.len();
        if p == 0 || backward.len() != p {
            return Err(Error::InvalidConfig(
                "forward and backward coefficient lists must be non-empty and of equal length".into(),
            ));
        }
        let k = forward[0].nrows();
        if forward.iter().chain(&backward).any(|m| m.shape() != (k, k)) {
            return Err(Error::InvalidConfig("coefficient matrices must all be K x K".into()));
        }
        let radius = spectral_radius(&companion(&forward));
        let psi = if radius < STATIONARITY_LIMIT {
            ma_coefficients(&forward).ok()
        } else {
            None
        };
        Ok(Self {
            p,
            n: 0,
            forward,
            forward_residuals: DMatrix::zeros(0, k),
            backward,
            backward_residuals: DMatrix::zeros(0, k),
            sigma: DMatrix::zeros(k, k),
            spectral_radius: radius,
            psi,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.sigma.nrows()
    }

    /// Number of score observations the model was fitted on (0 if built from coefficients).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn forward(&self) -> &[DMatrix<f64>] {
        &self.forward
    }

    pub fn backward(&self) -> &[DMatrix<f64>] {
        &self.backward
    }

    /// Forward residuals for `t = p+1..n`, one row each.
    pub fn forward_residuals(&self) -> &DMatrix<f64> {
        &self.forward_residuals
    }

    pub fn backward_residuals(&self) -> &DMatrix<f64> {
        &self.backward_residuals
    }

    /// Forward residuals minus their column means: the bootstrap pool.
    pub fn centered_forward_residuals(&self) -> DMatrix<f64> {
        center_columns(&self.forward_residuals).0
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn is_stationary(&self) -> bool {
        self.spectral_radius < STATIONARITY_LIMIT
    }

    /// Number of retained MA terms `M`, when the expansion converged.
    pub fn psi_truncation(&self) -> Option<usize> {
        self.psi.as_ref().map(|v| v.len() - 1)
    }

    /// MA coefficients `psi_0..=psi_M` of `A(z)^-1`.
    pub fn psi(&self) -> Result<&[DMatrix<f64>]> {
        if !self.is_stationary() {
            return Err(Error::NonStationary {
                spectral_radius: self.spectral_radius,
            });
        }
        self.psi.as_deref().ok_or(Error::PsiNotConverged {
            max_terms: PSI_MAX_TERMS,
        })
    }

    /// One-step forward prediction from the last `p` vectors of `history`
    /// (oldest first), without innovation.
    pub fn predict_next(&self, history: &[DVector<f64>]) -> DVector<f64> {
        let len = history.len();
        let mut out = DVector::zeros(self.k());
        for (j, a) in self.forward.iter().enumerate() {
            out += a * &history[len - 1 - j];
        }
        out
    }
}

fn split_coefficients(coef: &DMatrix<f64>, k: usize, p: usize) -> Vec<DMatrix<f64>> {
    (0..p).map(|j| coef.rows(j * k, k).transpose().into_owned()).collect()
}

/// Companion matrix of a VAR(p) with coefficient list `a`.
pub(crate) fn companion(a: &[DMatrix<f64>]) -> DMatrix<f64> {
    let p = a.len();
    let k = a[0].nrows();
    let mut c = DMatrix::zeros(k * p, k * p);
    for (j, aj) in a.iter().enumerate() {
        c.view_mut((0, j * k), (k, k)).copy_from(aj);
    }
    for i in k..k * p {
        c[(i, i - k)] = 1.0;
    }
    c
}

/// Spectral radius of the companion matrix for coefficient list `a`.
pub fn companion_spectral_radius(a: &[DMatrix<f64>]) -> f64 {
    spectral_radius(&companion(a))
}

/// `psi_0 = I`, `psi_j = sum_{l=1}^{min(j,p)} A_l psi_{j-l}`, truncated at the
/// first `M <= PSI_MAX_TERMS` with `|psi_M|_F < PSI_TOLERANCE`.
fn ma_coefficients(a: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let k = a[0].nrows();
    let mut psi = Vec::with_capacity(32);
    psi.push(DMatrix::identity(k, k));
    for j in 1..=PSI_MAX_TERMS {
        let mut next = DMatrix::zeros(k, k);
        for (l, al) in a.iter().enumerate().take(j) {
            next += al * &psi[j - l - 1];
        }
        let small = next.norm() < PSI_TOLERANCE;
        psi.push(next);
        if small {
            return Ok(psi);
        }
    }
    Err(Error::PsiNotConverged {
        max_terms: PSI_MAX_TERMS,
    })
}

/// Corrected AIC exactly as `n ln|S| + n (n K + p K^2) / (n - K (p + 1) - 1)`,
/// with the log-determinant of `S + 1e-12 I`.
///
/// Returns `None` when the denominator is not positive.
pub fn aicc(model: &VarModel, n: usize) -> Option<f64> {
    aicc_from_sigma(model.sigma(), n, model.p())
}

/// Corrected AIC from a residual covariance, sample size and order.
pub fn aicc_from_sigma(sigma: &DMatrix<f64>, n: usize, p: usize) -> Option<f64> {
    let k = sigma.nrows() as f64;
    let nf = n as f64;
    let denom = nf - k * (p as f64 + 1.0) - 1.0;
    if denom <= 0.0 {
        return None;
    }
    let log_det = log_det_regularized(sigma, 1e-12);
    Some(nf * log_det + nf * (nf * k + p as f64 * k * k) / denom)
}

/// AICc value of every order tried and the selected one.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSelection {
    pub p: usize,
    /// `(order, AICc)` for each identifiable order that could be fitted.
    pub criteria: Vec<(usize, f64)>,
}

/// Order in `1..=p_max` minimizing AICc; ties go to the smaller order.
pub fn select_order(scores: &DMatrix<f64>, p_max: usize) -> Result<OrderSelection> {
    let (n, k) = scores.shape();
    let mut criteria = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for p in 1..=p_max {
        if n <= p || n - p <= k * p {
            break;
        }
        let Ok(model) = VarModel::fit(scores, p) else {
            continue;
        };
        let Some(value) = aicc(&model, n) else {
            continue;
        };
        criteria.push((p, value));
        if best.is_none_or(|(_, b)| value < b) {
            best = Some((p, value));
        }
    }
    best.map(|(p, _)| OrderSelection { p, criteria })
        .ok_or(Error::NoIdentifiableOrder { p_max })
}

/// Iterated conditional-mean forecasts for horizons `1..=h` (`h x K`).
///
/// `history` holds at least `p` score vectors as rows, oldest first.
pub fn forecast_scores(model: &VarModel, history: &DMatrix<f64>, h: usize) -> Result<DMatrix<f64>> {
    let (rows, k) = history.shape();
    if rows < model.p() {
        return Err(Error::InsufficientData {
            what: "history rows for VAR forecast",
            need: model.p(),
            got: rows,
        });
    }
    if k != model.k() {
        return Err(Error::ShapeMismatch {
            what: "score dimension",
            expected: model.k(),
            found: k,
        });
    }
    let mut path: Vec<DVector<f64>> = (rows - model.p()..rows).map(|r| history.row(r).transpose()).collect();
    let mut out = DMatrix::zeros(h, k);
    for step in 0..h {
        let next = model.predict_next(&path);
        out.row_mut(step).copy_from(&next.transpose());
        path.push(next);
    }
    Ok(out)
}

/// Maps forward bootstrap innovations to backward ones,
/// `h_t = z_t - sum_j B_j z_{t+j}` with `z_t = sum_{i=0}^{M} psi_i e_{t-i}`.
///
/// `eps` holds one innovation per row. The `M` innovations before the first
/// row and the `p` after the last are drawn i.i.d. from the rows of `pool`.
/// The output has the same number of rows as `eps`.
pub fn backward_innovation_transfer<R: Rng + ?Sized>(
    model: &VarModel,
    eps: &DMatrix<f64>,
    pool: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let psi = model.psi()?;
    let (len, k) = eps.shape();
    if k != model.k() || pool.ncols() != k {
        return Err(Error::ShapeMismatch {
            what: "innovation dimension",
            expected: model.k(),
            found: if k != model.k() { k } else { pool.ncols() },
        });
    }
    if pool.nrows() == 0 {
        return Err(Error::InsufficientData {
            what: "innovation pool rows",
            need: 1,
            got: 0,
        });
    }
    let m = psi.len() - 1;
    let p = model.p();

    // ext row `m + t` holds eps row t.
    let total = m + len + p;
    let mut ext = DMatrix::zeros(total, k);
    for r in 0..m {
        ext.row_mut(r).copy_from(&pool.row(rng.random_range(0..pool.nrows())));
    }
    ext.rows_mut(m, len).copy_from(eps);
    for r in m + len..total {
        ext.row_mut(r).copy_from(&pool.row(rng.random_range(0..pool.nrows())));
    }

    // z for eps positions 0..len+p.
    let mut z = DMatrix::zeros(len + p, k);
    for t in 0..len + p {
        let mut acc = DVector::zeros(k);
        for (i, psi_i) in psi.iter().enumerate() {
            acc += psi_i * ext.row(m + t - i).transpose();
        }
        z.row_mut(t).copy_from(&acc.transpose());
    }

    let mut eta = DMatrix::zeros(len, k);
    for t in 0..len {
        let mut acc = z.row(t).transpose();
        for (j, b) in model.backward().iter().enumerate() {
            acc -= b * z.row(t + j + 1).transpose();
        }
        eta.row_mut(t).copy_from(&acc.transpose());
    }
    Ok(eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use alloc::vec;
    use rand_distr::{Distribution, StandardNormal};

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn aicc_scalar_value() {
        let v = aicc_from_sigma(&scalar(1.0), 100, 1).unwrap();
        assert!((v - 100.0 * 101.0 / 97.0).abs() < 1e-9);
        assert!((v - 104.1237).abs() < 1e-4);
    }

    #[test]
    fn aicc_identity_has_zero_log_det_term() {
        let v = aicc_from_sigma(&DMatrix::identity(3, 3), 50, 2).unwrap();
        let penalty = 50.0 * (50.0 * 3.0 + 2.0 * 9.0) / (50.0 - 9.0 - 1.0);
        assert!((v - penalty).abs() < 1e-8);
    }

    #[test]
    fn aicc_excludes_non_positive_denominator() {
        assert!(aicc_from_sigma(&DMatrix::identity(2, 2), 6, 2).is_none());
    }

    #[test]
    fn zero_coefficients_forecast_zero() {
        let model = VarModel::from_coefficients(vec![DMatrix::zeros(2, 2)], vec![DMatrix::zeros(2, 2)]).unwrap();
        let hist = DMatrix::from_row_slice(1, 2, &[3.0, -1.0]);
        let f = forecast_scores(&model, &hist, 4).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_geometric_forecast() {
        let model = VarModel::from_coefficients(vec![scalar(0.5)], vec![scalar(0.5)]).unwrap();
        let f = forecast_scores(&model, &scalar(2.0), 3).unwrap();
        assert_eq!(f.as_slice(), &[1.0, 0.5, 0.25]);
    }

    #[test]
    fn var2_matches_unrolled_recursion() {
        let a1 = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, -0.2, 0.3]);
        let a2 = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.05, -0.1]);
        let model = VarModel::from_coefficients(vec![a1.clone(), a2.clone()], vec![a1.clone(), a2.clone()]).unwrap();
        let hist = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 0.7]);
        let f = forecast_scores(&model, &hist, 3).unwrap();
        let b0 = DVector::from_vec(vec![1.0, 2.0]);
        let b1 = DVector::from_vec(vec![-0.5, 0.7]);
        let f1 = &a1 * &b1 + &a2 * &b0;
        let f2 = &a1 * &f1 + &a2 * &b1;
        let f3 = &a1 * &f2 + &a2 * &f1;
        for (h, expect) in [f1, f2, f3].iter().enumerate() {
            for c in 0..2 {
                assert!((f[(h, c)] - expect[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scalar_ar1_matches_hand_estimate() {
        let series = [
            0.3, -0.1, 0.4, 0.9, 0.2, -0.5, -0.8, -0.2, 0.1, 0.6, 1.1, 0.7, 0.0, -0.3, 0.2, 0.5, 0.1, -0.4, -0.6, 0.05,
        ];
        let scores = DMatrix::from_column_slice(20, 1, &series);
        let model = fit_var(&scores, 1).unwrap();
        let num: f64 = (1..20).map(|t| series[t] * series[t - 1]).sum();
        let den: f64 = (0..19).map(|t| series[t] * series[t]).sum();
        assert!((model.forward()[0][(0, 0)] - num / den).abs() < 1e-10);
        let num_b: f64 = (0..19).map(|t| series[t] * series[t + 1]).sum();
        let den_b: f64 = (1..20).map(|t| series[t] * series[t]).sum();
        assert!((model.backward()[0][(0, 0)] - num_b / den_b).abs() < 1e-10);
    }

    #[test]
    fn in_sample_identity_holds() {
        let mut rng = stream_rng(5, 0);
        let n = 200;
        let mut scores = DMatrix::zeros(n, 2);
        for t in 1..n {
            for c in 0..2 {
                let e: f64 = StandardNormal.sample(&mut rng);
                scores[(t, c)] = 0.5 * scores[(t - 1, c)] + e;
            }
        }
        let model = fit_var(&scores, 2).unwrap();
        for t in 2..n {
            let mut fitted = DVector::zeros(2);
            for (j, a) in model.forward().iter().enumerate() {
                fitted += a * scores.row(t - j - 1).transpose();
            }
            for c in 0..2 {
                let recon = fitted[c] + model.forward_residuals()[(t - 2, c)];
                assert!((recon - scores[(t, c)]).abs() < 1e-12);
            }
        }
        let pool = model.centered_forward_residuals();
        for c in 0..2 {
            assert!(pool.column(c).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn identity_operators_pass_innovations_through() {
        let model = VarModel::from_coefficients(vec![DMatrix::zeros(2, 2)], vec![DMatrix::zeros(2, 2)]).unwrap();
        let eps = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let pool = DMatrix::from_row_slice(1, 2, &[9.0, 9.0]);
        let eta = backward_innovation_transfer(&model, &eps, &pool, &mut stream_rng(1, 1)).unwrap();
        assert_eq!(eta, eps);
        assert_eq!(model.psi_truncation(), Some(1));
    }

    #[test]
    fn non_stationary_transfer_rejected() {
        let model = VarModel::from_coefficients(vec![scalar(1.0)], vec![scalar(1.0)]).unwrap();
        assert!(!model.is_stationary());
        let eps = scalar(1.0);
        assert!(matches!(
            backward_innovation_transfer(&model, &eps, &eps, &mut stream_rng(1, 1)),
            Err(Error::NonStationary { .. })
        ));
    }

    #[test]
    fn singular_design_reported() {
        let scores = DMatrix::zeros(30, 1);
        assert!(matches!(fit_var(&scores, 1), Err(Error::SingularDesign { .. })));
    }

    #[test]
    fn too_short_for_order() {
        let scores = DMatrix::from_fn(5, 2, |r, c| (r + c) as f64);
        assert!(matches!(fit_var(&scores, 2), Err(Error::InsufficientData { .. })));
    }
}
