use intraday_fts_core::datagen::{generate, orthonormalize, SynthSpec};
use intraday_fts_core::fpca::{ComponentSelection, FpcaModel};
use intraday_fts_core::gridcurves::{FunctionalTimeSeries, IntradayGrid};
use intraday_fts_core::math::quantile_sorted;
use intraday_fts_core::rng::stream_rng;
use intraday_fts_core::sieve::{
    far1_fit, intervals_from_errors, sieve_prediction, ts_point_forecast, BootstrapConfig, Far1Predictor,
    SieveBootstrap,
};
use intraday_fts_core::varmodel::{forecast_scores, select_order, VarModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn fixture(n: usize, tau: usize, seed: u64) -> FunctionalTimeSeries {
    let mut spec = SynthSpec::diagonal_ar1(n, tau, 0.5, &[1.0, 0.3], 0.2, seed);
    spec.mean = Some((1..tau).map(|i| 0.1 * i as f64 / tau as f64).collect());
    generate(&spec).unwrap().0
}

fn fit(fts: &FunctionalTimeSeries) -> (FpcaModel, VarModel) {
    let fpca = FpcaModel::fit(fts.values(), fts.grid().quad_weight(), ComponentSelection::Fixed(2)).unwrap();
    let scores = fpca.retained_scores();
    let var = VarModel::fit(&scores, select_order(&scores, 5).unwrap().p).unwrap();
    (fpca, var)
}

#[test]
fn point_forecast_is_the_composition() {
    let fts = fixture(30, 10, 1);
    let (fpca, var) = fit(&fts);
    let scores = forecast_scores(&var, &fpca.retained_scores(), 1).unwrap();
    let by_hand = fpca
        .reconstruct(&scores.row(0).iter().copied().collect::<Vec<_>>())
        .unwrap();
    let ours = ts_point_forecast(&fpca, &var).unwrap();
    for (a, b) in ours.iter().zip(&by_hand) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn zero_dynamics_forecast_the_mean() {
    let fts = fixture(40, 12, 2);
    let (fpca, _) = fit(&fts);
    let zero = DMatrix::zeros(2, 2);
    let var = VarModel::from_coefficients(vec![zero.clone()], vec![zero]).unwrap();
    assert_eq!(ts_point_forecast(&fpca, &var).unwrap(), fpca.mean().to_vec());
}

#[test]
fn pseudo_series_are_reproducible() {
    let fts = fixture(80, 15, 3);
    let (fpca, var) = fit(&fts);
    let boot = SieveBootstrap::new(&fts, &fpca, &var, 99).unwrap();
    let a = boot.replicate(4).unwrap();
    let again = SieveBootstrap::new(&fts, &fpca, &var, 99)
        .unwrap()
        .replicate(4)
        .unwrap();
    assert_eq!(a, again);
    assert_ne!(a, boot.replicate(5).unwrap());
    // The last p pseudo curves are the observed ones.
    let n = fts.n();
    for t in n - var.p()..n {
        assert_eq!(a.curves.row(t), fts.values().row(t));
    }
}

#[test]
fn resampled_residuals_are_centered() {
    let fts = fixture(100, 20, 4);
    let (fpca, var) = fit(&fts);
    let w = fts.grid().quad_weight();
    let phi = fpca.retained_eigenfunctions();
    let boot = SieveBootstrap::new(&fts, &fpca, &var, 5).unwrap();
    let len = fts.n() - var.p();
    let b = 200;
    let cols = fpca.curve_len();
    let mut sum = DVector::zeros(cols);
    for r in 0..b {
        let pseudo = boot.replicate(r).unwrap();
        for t in 0..len {
            // Truncation residuals are orthogonal to the retained eigenfunctions,
            // so the residual draw is the part of the curve outside their span.
            let centered = pseudo.curves.row(t).transpose() - DVector::from_column_slice(fpca.mean());
            let scores = phi.transpose() * &centered * w;
            sum += centered - &phi * scores;
        }
    }
    let draws = (len * b) as f64;
    let pool = fpca.residuals();
    for i in 0..cols {
        let mean = sum[i] / draws;
        let col = pool.column(i);
        let m = col.mean();
        let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (col.len() - 1) as f64).sqrt();
        assert!(
            mean.abs() < 3.0 * sd / draws.sqrt(),
            "grid point {i}: mean {mean}, sd {sd}"
        );
    }
}

#[test]
fn far1_of_independent_curves_is_near_zero() {
    let tau = 20;
    let mut spec = SynthSpec::diagonal_ar1(2000, tau, 0.0, &[1.0, 0.5], 0.3, 6);
    spec.burn_in = 0;
    let (fts, _) = generate(&spec).unwrap();
    let far = far1_fit(&fts).unwrap();
    let norm = far.operator_matrix().singular_values().max();
    assert!(norm < 0.1, "operator norm {norm}");
    assert_eq!(far.predict(far.mean()), far.mean().to_vec());
}

#[test]
fn far1_recovers_a_rank_one_kernel() {
    let tau = 25;
    let w = 1.0 / (tau - 2) as f64;
    let raw = DMatrix::from_fn(tau - 1, 2, |i, k| {
        let x = (i + 1) as f64 / (tau - 1) as f64;
        (std::f64::consts::PI * (k + 1) as f64 * x).sin()
    });
    let basis = orthonormalize(&raw, w).unwrap();
    let phi = basis.column(0).into_owned();
    let psi = basis.column(1).into_owned();
    let mut rng = stream_rng(7, 0);
    let n = 2000;
    let mut curves = DMatrix::zeros(n, tau - 1);
    let mut prev = DVector::zeros(tau - 1);
    for t in 0..n + 100 {
        // X_{t+1} = 0.6 <phi, X_t> phi + eps.
        let proj = (phi.transpose() * &prev)[0] * w;
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let next = &phi * (0.6 * proj + z1) + &psi * (0.5 * z2);
        if t >= 100 {
            curves.row_mut(t - 100).copy_from(&next.transpose());
        }
        prev = next;
    }
    let far = Far1Predictor::fit(&curves, w).unwrap();
    let image = DVector::from_vec(far.apply(phi.as_slice()));
    let err = ((&image - &phi * 0.6).norm_squared() * w).sqrt();
    assert!(err < 0.06, "action on phi off by {err}");
}

#[test]
fn intervals_are_ordered_and_bands_nested() {
    let fts = fixture(120, 20, 8);
    let (fpca, var) = fit(&fts);
    let cfg = BootstrapConfig {
        replicates: 200,
        seed: 3,
        ..Default::default()
    };
    let s = sieve_prediction(&fts, &fpca, &var, &cfg).unwrap();
    let (wide, narrow) = (s.band_at(0.05).unwrap(), s.band_at(0.2).unwrap());
    assert!(wide.radius_factor >= narrow.radius_factor && narrow.radius_factor > 0.0);
    for iv in &s.pointwise {
        assert!(iv.lower.iter().zip(&iv.upper).all(|(l, u)| l <= u));
    }
    let (p95, p80) = (s.pointwise_at(0.05).unwrap(), s.pointwise_at(0.2).unwrap());
    for j in 0..p95.lower.len() {
        assert!(p95.lower[j] <= p80.lower[j] && p80.upper[j] <= p95.upper[j]);
        assert!(wide.lower[j] <= narrow.lower[j] && narrow.upper[j] <= wide.upper[j]);
    }
    assert!(!s.flags.few_replicates && s.flags.zero_sd_points == 0);
}

#[test]
fn pointwise_quantiles_match_sorting() {
    let fts = fixture(100, 15, 9);
    let (fpca, var) = fit(&fts);
    let cfg = BootstrapConfig {
        replicates: 157,
        seed: 1,
        ..Default::default()
    };
    let s = sieve_prediction(&fts, &fpca, &var, &cfg).unwrap();
    let errors = s.errors();
    for iv in &s.pointwise {
        for j in 0..errors.ncols() {
            let mut col: Vec<f64> = errors.column(j).iter().map(|e| s.point[j] + e).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(iv.lower[j], quantile_sorted(&col, iv.alpha / 2.0));
            assert_eq!(iv.upper[j], quantile_sorted(&col, 1.0 - iv.alpha / 2.0));
        }
    }
    let (_, sup, _, bands, _) = intervals_from_errors(&s.point, &errors, &cfg.alpha_levels);
    assert_eq!(sup, s.sup_statistics);
    assert_eq!(bands, s.bands);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let fts = fixture(100, 15, 10);
    let (fpca, var) = fit(&fts);
    let cfg = BootstrapConfig {
        replicates: 120,
        seed: 12,
        ..Default::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sieve_prediction(&fts, &fpca, &var, &cfg).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn grid_weight_matches_fitting_weight() {
    let grid = IntradayGrid::uniform(40, 5).unwrap();
    assert!((grid.quad_weight() - 1.0 / 38.0).abs() < 1e-15);
}
