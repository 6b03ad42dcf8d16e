use intraday_fts_core::evalharness::{ecp, interval_score, CoverageMode};
use intraday_fts_core::gridcurves::{cidr_transform, inverse_cidr, IntradayGrid, PriceMatrix};
use intraday_fts_core::math::{quantile_select, quantile_sorted};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn coverage_fixture() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        (matrix(r, c, -2.0, 2.0), matrix(r, c, -2.0, 0.5), matrix(r, c, 0.0, 2.0)).prop_map(|(a, lo, width)| {
            let hi = &lo + width;
            (a, lo, hi)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn uniform_coverage_never_exceeds_pointwise((a, lo, hi) in coverage_fixture()) {
        let uniform = ecp(&a, &lo, &hi, CoverageMode::Uniform).unwrap();
        let pointwise = ecp(&a, &lo, &hi, CoverageMode::Pointwise).unwrap();
        prop_assert!(uniform <= pointwise);
        prop_assert!((0.0..=1.0).contains(&uniform) && (0.0..=1.0).contains(&pointwise));
    }

    #[test]
    fn interval_score_is_at_least_the_width(
        lo in -5.0f64..5.0,
        width in 0.0f64..5.0,
        x in -10.0f64..10.0,
        alpha in 0.01f64..0.5,
    ) {
        let hi = lo + width;
        let width = hi - lo;
        let s = interval_score(lo, hi, x, alpha);
        prop_assert!(s >= width);
        if x >= lo && x <= hi {
            prop_assert_eq!(s, width);
        } else {
            prop_assert!(s > width);
        }
    }

    #[test]
    fn selection_quantile_equals_sorting(
        values in prop::collection::vec(-1e3f64..1e3, 1..1000),
        prob in 0.0f64..=1.0,
    ) {
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut scratch = values;
        prop_assert_eq!(quantile_select(&mut scratch, prob), quantile_sorted(&sorted, prob));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn cidr_round_trips_prices(
        (n, tau, prices) in (1usize..8, 3usize..20)
            .prop_flat_map(|(n, tau)| (Just(n), Just(tau), matrix(n, tau, 1.0, 500.0)))
    ) {
        let pm = PriceMatrix::new(IntradayGrid::uniform(tau, 5).unwrap(), prices.clone()).unwrap();
        let curves = cidr_transform(&pm);
        prop_assert_eq!(curves.values().shape(), (n, tau - 1));
        let back = inverse_cidr(&curves, &pm.open_prices()).unwrap();
        for (x, y) in back.prices().iter().zip(prices.iter()) {
            prop_assert!((x - y).abs() <= 1e-10 * y);
        }
    }
}
