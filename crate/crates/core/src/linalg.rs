use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::math;

/// Eigenpairs of a symmetric matrix sorted by non-increasing eigenvalue.
pub(crate) fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Centered copy of `x` and its column means.
pub(crate) fn center_columns(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| x[(r, c)] - means[c]);
    (centered, means)
}

/// Least squares `min |X b - Y|` through the SVD, rejecting designs whose
/// condition number exceeds `max_condition`.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>, max_condition: f64) -> Result<DMatrix<f64>> {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= max_condition) {
        return Err(Error::SingularDesign { condition });
    }
    svd.solve(y, 0.0).map_err(|_| Error::SingularDesign { condition })
}

/// Log-determinant of a symmetric positive semidefinite matrix after adding
/// `ridge` to the diagonal.
pub(crate) fn log_det_regularized(m: &DMatrix<f64>, ridge: f64) -> f64 {
    let mut reg = m.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += ridge;
    }
    match reg.clone().cholesky() {
        Some(ch) => {
            let l = ch.l();
            2.0 * (0..l.nrows()).map(|i| math::ln(l[(i, i)])).sum::<f64>()
        }
        None => {
            let (values, _) = sorted_symmetric_eigen(reg);
            values.iter().map(|&v| math::ln(v.max(ridge))).sum()
        }
    }
}

/// Largest modulus among the eigenvalues of a square matrix.
pub(crate) fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| math::sqrt(z.re * z.re + z.im * z.im))
        .fold(0.0, f64::max)
}
