//! Scalar helpers routed through `libm` so results do not depend on whether
//! `std` is linked, plus the empirical quantile convention used everywhere.

use alloc::vec::Vec;

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with divisor `len - 1`; zero for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    sqrt(ss / (xs.len() - 1) as f64)
}

/// Type-7 quantile (linear interpolation between order statistics) of an
/// already sorted slice.
///
/// Panics if `sorted` is empty.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let prob = prob.clamp(0.0, 1.0);
    let h = (n - 1) as f64 * prob;
    let lo = floor(h) as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Type-7 quantile of an unsorted sample.
pub fn quantile(values: &[f64], prob: f64) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, prob)
}

/// Type-7 quantile computed by partial selection; reorders `values` but gives
/// exactly the result of [`quantile_sorted`] on the sorted sample.
///
/// Panics if `values` is empty.
pub fn quantile_select(values: &mut [f64], prob: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty sample");
    let n = values.len();
    if n == 1 {
        return values[0];
    }
    let prob = prob.clamp(0.0, 1.0);
    let h = (n - 1) as f64 * prob;
    let lo = floor(h) as usize;
    let (_, &mut low, rest) = values.select_nth_unstable_by(lo.min(n - 1), f64::total_cmp);
    if lo + 1 >= n {
        return low;
    }
    let high = rest
        .iter()
        .copied()
        .fold(f64::INFINITY, |a, b| if b.total_cmp(&a).is_lt() { b } else { a });
    let frac = h - lo as f64;
    low + frac * (high - low)
}

/// Lower and upper type-7 quantiles at `alpha / 2` and `1 - alpha / 2`.
pub fn central_interval(values: &[f64], alpha: f64) -> (f64, f64) {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    (
        quantile_sorted(&sorted, alpha / 2.0),
        quantile_sorted(&sorted, 1.0 - alpha / 2.0),
    )
}
