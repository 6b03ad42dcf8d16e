use intraday_fts_core::rng::stream_rng;
use intraday_fts_core::varmodel::{aicc, backward_innovation_transfer, select_order, VarModel, DEFAULT_P_MAX};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Simulates a VAR(p) with identity innovation covariance after a burn-in.
fn simulate_var(a: &[DMatrix<f64>], n: usize, seed: u64) -> DMatrix<f64> {
    let k = a[0].nrows();
    let p = a.len();
    let burn = 500;
    let mut rng = stream_rng(seed, 0);
    let mut x: Vec<DVector<f64>> = vec![DVector::zeros(k); p];
    for _ in 0..burn + n {
        let mut next = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        for (j, aj) in a.iter().enumerate() {
            next += aj * &x[x.len() - 1 - j];
        }
        x.push(next);
    }
    let tail = &x[x.len() - n..];
    DMatrix::from_fn(n, k, |t, c| tail[t][c])
}

fn white_noise(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, 1);
    DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal))
}

#[test]
fn var1_coefficients_recovered_at_n_5000() {
    let a = DMatrix::identity(2, 2) * 0.5;
    let scores = simulate_var(std::slice::from_ref(&a), 5000, 11);
    let model = VarModel::fit(&scores, 1).unwrap();
    let err = (&model.forward()[0] - &a).norm();
    assert!(err < 0.05, "|A_hat - A|_F = {err}");
}

#[test]
fn white_noise_coefficients_are_small() {
    let model = VarModel::fit(&white_noise(5000, 2, 5), 1).unwrap();
    assert!(model.forward()[0].norm() < 0.05);
}

/// Least squares, residual covariance and corrected AIC computed from
/// scratch with the normal equations and a Cholesky log-determinant.
fn scripted_aicc(scores: &DMatrix<f64>, p: usize) -> f64 {
    let (n, k) = scores.shape();
    let rows = n - p;
    let y = DMatrix::from_fn(rows, k, |r, c| scores[(r + p, c)]);
    let x = DMatrix::from_fn(rows, k * p, |r, c| scores[(r + p - (c / k + 1), c % k)]);
    let xtx = x.transpose() * &x;
    let coef = xtx.cholesky().unwrap().solve(&(x.transpose() * &y));
    let resid = &y - &x * coef;
    let sigma = resid.transpose() * &resid / rows as f64;
    let chol = sigma.cholesky().unwrap();
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let (nf, kf, pf) = (n as f64, k as f64, p as f64);
    nf * log_det + nf * (nf * kf + pf * kf * kf) / (nf - kf * (pf + 1.0) - 1.0)
}

#[test]
fn aicc_matches_scripted_formula() {
    let a = vec![DMatrix::from_row_slice(2, 2, &[0.4, 0.1, -0.2, 0.3])];
    let scores = simulate_var(&a, 300, 3);
    for p in 1..=3 {
        let model = VarModel::fit(&scores, p).unwrap();
        let ours = aicc(&model, scores.nrows()).unwrap();
        let oracle = scripted_aicc(&scores, p);
        assert!((ours - oracle).abs() < 1e-9, "p={p}: {ours} vs {oracle}");
    }
}

#[test]
fn var2_order_recovered_in_most_replicates() {
    // Component roots {0.8, -0.5}, {0.8, 0.6} and {0.8, -0.5}: spectral
    // radius 0.8. AICc is not consistent and over-fits more often for small
    // K, so three components are used.
    let a1 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 1.4, 0.3]));
    let a2 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.4, -0.48, 0.4]));
    let a = vec![a1, a2];
    let hits = (0..50)
        .filter(|&r| select_order(&simulate_var(&a, 1000, 100 + r), DEFAULT_P_MAX).unwrap().p == 2)
        .count();
    assert!(hits >= 40, "order 2 selected in {hits}/50 replicates");
}

#[test]
fn white_noise_selects_first_order() {
    let sel = select_order(&white_noise(1000, 2, 9), DEFAULT_P_MAX).unwrap();
    assert_eq!(sel.p, 1);
    assert!(!sel.criteria.is_empty());
}

fn scalar_ar1() -> VarModel {
    let a = DMatrix::from_element(1, 1, 0.5);
    VarModel::from_coefficients(vec![a.clone()], vec![a]).unwrap()
}

#[test]
fn transferred_innovations_keep_their_variance() {
    let model = scalar_ar1();
    let n = 100_000;
    let mut rng = stream_rng(21, 0);
    let eps = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    let eta = backward_innovation_transfer(&model, &eps, &eps, &mut rng).unwrap();
    let var = |m: &DMatrix<f64>| {
        let mean = m.mean();
        m.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m.len() - 1) as f64
    };
    let ratio = var(&eta) / var(&eps);
    assert!((ratio - 1.0).abs() < 0.05, "variance ratio {ratio}");
}

#[test]
fn backward_series_matches_yule_walker() {
    let model = scalar_ar1();
    let n = 10_000;
    let mut rng = stream_rng(22, 0);
    let eps = DMatrix::from_fn(n + 200, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    let eta = backward_innovation_transfer(&model, &eps, &eps, &mut rng).unwrap();
    // beta*_t = b beta*_{t+1} + eta_t, generated from the end backwards.
    let mut beta = vec![0.0; n + 200];
    for t in (0..n + 199).rev() {
        beta[t] = 0.5 * beta[t + 1] + eta[(t, 0)];
    }
    let x = &beta[..n];
    let mean = x.iter().sum::<f64>() / n as f64;
    let lag1 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / n as f64;
    // Yule-Walker: gamma_1 = a sigma^2 / (1 - a^2).
    let expected = 0.5 / (1.0 - 0.25);
    assert!(
        (lag1 / expected - 1.0).abs() < 0.05,
        "lag-1 autocovariance {lag1} vs {expected}"
    );
}
