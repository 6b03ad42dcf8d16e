//! Intraday price grids and cumulative intraday return (CIDR) curves.
//!
//! A trading day is sampled at `tau` equally spaced times `u_1 < ... < u_tau`.
//! The CIDR curve of day `t` is `100 * (ln P_t(u_i) - ln P_t(u_1))` for
//! `i = 2..=tau`, so each curve has `tau - 1` values. Column `j` of a curve
//! matrix corresponds to grid index `u_{j + 2}`.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::math;

/// Sample times of one trading day, in minutes since the open.
#[derive(Debug, Clone, PartialEq)]
pub struct IntradayGrid {
    times: Vec<u32>,
}

impl IntradayGrid {
    pub fn new(times: Vec<u32>) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::InsufficientData {
                what: "intraday grid points",
                need: 3,
                got: times.len(),
            });
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("grid times must be strictly increasing".into()));
        }
        Ok(Self { times })
    }

    /// `tau` points spaced `step` minutes apart starting at minute 0.
    pub fn uniform(tau: usize, step: u32) -> Result<Self> {
        Self::new((0..tau as u32).map(|i| i * step).collect())
    }

    pub fn tau(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[u32] {
        &self.times
    }

    /// Number of values in a CIDR curve (`tau - 1`).
    pub fn curve_len(&self) -> usize {
        self.times.len() - 1
    }

    /// Grid step in index units; the grid is uniform in index by construction.
    pub fn spacing(&self) -> f64 {
        1.0
    }

    /// Rectangle-rule weight `1 / (tau - 2)` over the curve indices `2..=tau`.
    pub fn quad_weight(&self) -> f64 {
        1.0 / (self.tau() - 2) as f64
    }
}

/// Strictly positive close prices, one row per day and one column per grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceMatrix {
    grid: IntradayGrid,
    prices: DMatrix<f64>,
}

impl PriceMatrix {
    pub fn new(grid: IntradayGrid, prices: DMatrix<f64>) -> Result<Self> {
        if prices.ncols() != grid.tau() {
            return Err(Error::ShapeMismatch {
                what: "price columns",
                expected: grid.tau(),
                found: prices.ncols(),
            });
        }
        for day in 0..prices.nrows() {
            for index in 0..prices.ncols() {
                let value = prices[(day, index)];
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::InvalidPrice { day, index, value });
                }
            }
        }
        Ok(Self { grid, prices })
    }

    pub fn from_rows(grid: IntradayGrid, rows: &[Vec<f64>]) -> Result<Self> {
        let tau = grid.tau();
        if let Some(bad) = rows.iter().find(|r| r.len() != tau) {
            return Err(Error::ShapeMismatch {
                what: "price row length",
                expected: tau,
                found: bad.len(),
            });
        }
        let prices = DMatrix::from_fn(rows.len(), tau, |i, j| rows[i][j]);
        Self::new(grid, prices)
    }

    pub fn grid(&self) -> &IntradayGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.prices.nrows()
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    /// Opening prices `P_t(u_1)`.
    pub fn open_prices(&self) -> Vec<f64> {
        self.prices.column(0).iter().copied().collect()
    }
}

/// A time series of curves on a common grid: `n` rows of `tau - 1` values.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalTimeSeries {
    grid: IntradayGrid,
    values: DMatrix<f64>,
}

impl FunctionalTimeSeries {
    pub fn new(grid: IntradayGrid, values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() != grid.curve_len() {
            return Err(Error::ShapeMismatch {
                what: "curve length",
                expected: grid.curve_len(),
                found: values.ncols(),
            });
        }
        check_finite("curves", &values)?;
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &IntradayGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn curve(&self, t: usize) -> Vec<f64> {
        self.values.row(t).iter().copied().collect()
    }

    /// Days `start..end` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.rows(start, end - start).into_owned(),
        }
    }
}

pub(crate) fn check_finite(what: &'static str, m: &DMatrix<f64>) -> Result<()> {
    for row in 0..m.nrows() {
        for col in 0..m.ncols() {
            if !m[(row, col)].is_finite() {
                return Err(Error::NonFinite { what, row, col });
            }
        }
    }
    Ok(())
}

/// CIDR curves `100 * [ln P_t(u_i) - ln P_t(u_1)]`, `i = 2..=tau`.
pub fn cidr_transform(prices: &PriceMatrix) -> FunctionalTimeSeries {
    let p = &prices.prices;
    let values = DMatrix::from_fn(p.nrows(), p.ncols() - 1, |t, j| {
        100.0 * (math::ln(p[(t, j + 1)]) - math::ln(p[(t, 0)]))
    });
    FunctionalTimeSeries {
        grid: prices.grid.clone(),
        values,
    }
}

/// Prices `exp(X_t(u_i) / 100) * P_t(u_1)` with column 1 set to `open_prices`.
pub fn inverse_cidr(curves: &FunctionalTimeSeries, open_prices: &[f64]) -> Result<PriceMatrix> {
    if open_prices.len() != curves.n() {
        return Err(Error::ShapeMismatch {
            what: "open prices",
            expected: curves.n(),
            found: open_prices.len(),
        });
    }
    let v = &curves.values;
    let prices = DMatrix::from_fn(v.nrows(), v.ncols() + 1, |t, i| {
        if i == 0 {
            open_prices[t]
        } else {
            math::exp(v[(t, i - 1)] / 100.0) * open_prices[t]
        }
    });
    PriceMatrix::new(curves.grid.clone(), prices)
}

/// Fills interior gaps of each day by linear interpolation in index space.
///
/// Every row must have its first and last entries present; nothing is
/// extrapolated.
pub fn interpolate_missing(grid: &IntradayGrid, raw: &[Vec<Option<f64>>]) -> Result<PriceMatrix> {
    let tau = grid.tau();
    let mut rows = Vec::with_capacity(raw.len());
    for (day, row) in raw.iter().enumerate() {
        if row.len() != tau {
            return Err(Error::ShapeMismatch {
                what: "raw price row length",
                expected: tau,
                found: row.len(),
            });
        }
        rows.push(fill_row(day, row)?);
    }
    PriceMatrix::from_rows(grid.clone(), &rows)
}

fn fill_row(day: usize, row: &[Option<f64>]) -> Result<Vec<f64>> {
    let last = row.len() - 1;
    if row[0].is_none() {
        return Err(Error::MissingBoundary { day, index: 0 });
    }
    if row[last].is_none() {
        return Err(Error::MissingBoundary { day, index: last });
    }
    let mut out = Vec::with_capacity(row.len());
    let mut left = 0usize;
    for (i, value) in row.iter().enumerate() {
        match value {
            Some(v) => {
                out.push(*v);
                left = i;
            }
            None => {
                let right = (i + 1..row.len())
                    .find(|&j| row[j].is_some())
                    .expect("last entry present");
                let (a, b) = (row[left].unwrap(), row[right].unwrap());
                let frac = (i - left) as f64 / (right - left) as f64;
                out.push(a + frac * (b - a));
            }
        }
    }
    Ok(out)
}

/// Why a raw day was excluded during cleaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    /// More than the allowed fraction of entries were missing.
    TooManyMissing { missing: usize },
    /// The opening print `u_1` was missing.
    MissingOpen,
    /// The closing print `u_tau` was missing.
    MissingClose,
}

/// Outcome of [`clean_raw_days`].
#[derive(Debug, Clone, PartialEq)]
pub struct CleanReport {
    /// Raw day indices kept, in order.
    pub kept: Vec<usize>,
    pub dropped: Vec<(usize, DropReason)>,
    pub missing_cells: usize,
    pub interpolated_cells: usize,
}

/// Drops unusable days and interpolates the rest.
///
/// Days with more than `max_missing_fraction` missing entries, or with a
/// missing first or last entry, are dropped and reported.
pub fn clean_raw_days(
    grid: &IntradayGrid,
    raw: &[Vec<Option<f64>>],
    max_missing_fraction: f64,
) -> Result<(PriceMatrix, CleanReport)> {
    let tau = grid.tau();
    let mut report = CleanReport {
        kept: Vec::new(),
        dropped: Vec::new(),
        missing_cells: 0,
        interpolated_cells: 0,
    };
    let mut keep_rows = Vec::new();
    for (day, row) in raw.iter().enumerate() {
        if row.len() != tau {
            return Err(Error::ShapeMismatch {
                what: "raw price row length",
                expected: tau,
                found: row.len(),
            });
        }
        let missing = row.iter().filter(|v| v.is_none()).count();
        report.missing_cells += missing;
        if missing as f64 > max_missing_fraction * tau as f64 {
            report.dropped.push((day, DropReason::TooManyMissing { missing }));
        } else if row[0].is_none() {
            report.dropped.push((day, DropReason::MissingOpen));
        } else if row[tau - 1].is_none() {
            report.dropped.push((day, DropReason::MissingClose));
        } else {
            report.interpolated_cells += missing;
            report.kept.push(day);
            keep_rows.push(row.clone());
        }
    }
    let prices = interpolate_missing(grid, &keep_rows)?;
    Ok((prices, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grid(tau: usize) -> IntradayGrid {
        IntradayGrid::uniform(tau, 5).unwrap()
    }

    #[test]
    fn constant_prices_give_zero_curves() {
        let p = PriceMatrix::from_rows(grid(4), &[vec![100.0; 4], vec![100.0; 4]]).unwrap();
        let c = cidr_transform(&p);
        assert_eq!(c.values().ncols(), 3);
        assert!(c.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn log_ratio_of_one_percent() {
        let p = PriceMatrix::from_rows(grid(3), &[vec![100.0, 100.0 * math::exp(0.01), 100.0]]).unwrap();
        let c = cidr_transform(&p);
        assert!((c.values()[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_of_zero_and_unit_curves() {
        let fts = FunctionalTimeSeries::new(grid(3), DMatrix::from_row_slice(1, 2, &[0.0, 1.0])).unwrap();
        let p = inverse_cidr(&fts, &[100.0]).unwrap();
        assert_eq!(p.prices()[(0, 0)], 100.0);
        assert_eq!(p.prices()[(0, 1)], 100.0);
        assert!((p.prices()[(0, 2)] - 100.0 * math::exp(0.01)).abs() < 1e-12);
    }

    #[test]
    fn inverse_rejects_length_mismatch() {
        let fts = FunctionalTimeSeries::new(grid(3), DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(inverse_cidr(&fts, &[1.0]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn non_positive_price_is_located() {
        let err = PriceMatrix::from_rows(grid(3), &[vec![1.0, 2.0, 3.0], vec![1.0, 0.0, 3.0]]).unwrap_err();
        assert_eq!(
            err,
            Error::InvalidPrice {
                day: 1,
                index: 1,
                value: 0.0
            }
        );
    }

    #[test]
    fn midpoint_and_two_point_gaps() {
        let g3 = grid(3);
        let p = interpolate_missing(&g3, &[vec![Some(100.0), None, Some(102.0)]]).unwrap();
        assert_eq!(
            p.prices().row(0).iter().copied().collect::<Vec<_>>(),
            vec![100.0, 101.0, 102.0]
        );

        let g4 = grid(4);
        let p = interpolate_missing(&g4, &[vec![Some(100.0), None, None, Some(103.0)]]).unwrap();
        let row: Vec<f64> = p.prices().row(0).iter().copied().collect();
        for (a, b) in row.iter().zip([100.0, 101.0, 102.0, 103.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn complete_row_unchanged() {
        let p = interpolate_missing(&grid(3), &[vec![Some(1.5), Some(2.5), Some(3.5)]]).unwrap();
        assert_eq!(
            p.prices().row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.5, 2.5, 3.5]
        );
    }

    #[test]
    fn missing_boundary_rejected() {
        let err = interpolate_missing(&grid(3), &[vec![Some(1.0), Some(2.0), None]]).unwrap_err();
        assert_eq!(err, Error::MissingBoundary { day: 0, index: 2 });
        let err = interpolate_missing(&grid(3), &[vec![None, Some(2.0), Some(1.0)]]).unwrap_err();
        assert_eq!(err, Error::MissingBoundary { day: 0, index: 0 });
    }

    #[test]
    fn cleaning_drops_sparse_and_open_less_days() {
        let g = grid(4);
        let raw = vec![
            vec![Some(1.0), None, Some(1.0), Some(1.0)],
            vec![Some(1.0), None, None, None],
            vec![None, Some(1.0), Some(1.0), Some(1.0)],
            vec![Some(1.0), Some(1.0), Some(1.0), None],
        ];
        let (p, report) = clean_raw_days(&g, &raw, 0.5).unwrap();
        assert_eq!(p.n(), 1);
        assert_eq!(report.kept, vec![0]);
        assert_eq!(report.interpolated_cells, 1);
        assert_eq!(report.missing_cells, 6);
        assert_eq!(
            report.dropped,
            vec![
                (1, DropReason::TooManyMissing { missing: 3 }),
                (2, DropReason::MissingOpen),
                (3, DropReason::MissingClose)
            ]
        );
    }

    #[test]
    fn grid_validation() {
        assert!(IntradayGrid::new(vec![0, 5]).is_err());
        assert!(IntradayGrid::new(vec![0, 5, 5]).is_err());
        let g = IntradayGrid::uniform(75, 5).unwrap();
        assert_eq!(g.curve_len(), 74);
        assert!((g.quad_weight() - 1.0 / 73.0).abs() < 1e-15);
    }
}
