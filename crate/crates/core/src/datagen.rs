//! Synthetic curve processes with known ground truth.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gridcurves::{FunctionalTimeSeries, IntradayGrid};
use crate::math;
use crate::rng::stream_rng;
use crate::varmodel::{companion_spectral_radius, STATIONARITY_LIMIT};

/// Basis from which the true eigenfunctions are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisFamily {
    /// `sin(k pi x)`, `k = 1, 2, ...`
    #[default]
    Sine,
    /// `x^k`, `k = 1, 2, ...`
    Polynomial,
}

/// Early-to-late block linkage: the process scores drive the early block
/// `u_2..u_m` and the late block `u_{m+1}..u_tau` has its own scores
/// `late = early * rho + N(0, late_sd^2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkedBlocks {
    pub split_m: usize,
    /// `K_true x S` linkage matrix.
    pub rho: DMatrix<f64>,
    pub late_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub tau: usize,
    pub basis: BasisFamily,
    pub k_true: usize,
    /// VAR coefficient matrices `A_1..A_p` (`K_true x K_true`).
    pub var_coefficients: Vec<DMatrix<f64>>,
    pub innovation_cov: DMatrix<f64>,
    /// Standard deviation of independent Gaussian noise at each grid point.
    pub noise_sd: f64,
    /// Mean curve of length `tau - 1`; zero when absent.
    pub mean: Option<Vec<f64>>,
    pub seed: u64,
    pub burn_in: usize,
    pub linkage: Option<LinkedBlocks>,
}

impl SynthSpec {
    /// `K_true` independent AR(1) score series with coefficient `a` and
    /// innovation variances `variances`.
    pub fn diagonal_ar1(n: usize, tau: usize, a: f64, variances: &[f64], noise_sd: f64, seed: u64) -> Self {
        let k = variances.len();
        Self {
            n,
            tau,
            basis: BasisFamily::Sine,
            k_true: k,
            var_coefficients: alloc::vec![DMatrix::identity(k, k) * a],
            innovation_cov: DMatrix::from_diagonal(&DVector::from_column_slice(variances)),
            noise_sd,
            mean: None,
            seed,
            burn_in: 200,
            linkage: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau < 3 || self.n == 0 {
            return Err(Error::InvalidConfig(
                "synthetic series needs tau >= 3 and n >= 1".into(),
            ));
        }
        if self.k_true == 0 || self.k_true > self.tau - 1 {
            return Err(Error::InvalidConfig(alloc::format!(
                "component count {} outside 1..={}",
                self.k_true,
                self.tau - 1
            )));
        }
        let k = self.k_true;
        if self.var_coefficients.iter().any(|a| a.nrows() != k || a.ncols() != k)
            || self.innovation_cov.nrows() != k
            || self.innovation_cov.ncols() != k
        {
            return Err(Error::ShapeMismatch {
                what: "score dynamics dimension",
                expected: k,
                found: self.innovation_cov.nrows(),
            });
        }
        let radius = companion_spectral_radius(&self.var_coefficients);
        if !(radius < STATIONARITY_LIMIT) {
            return Err(Error::NonStationary {
                spectral_radius: radius,
            });
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidConfig("noise scale must be non-negative".into()));
        }
        if let Some(mean) = &self.mean {
            if mean.len() != self.tau - 1 {
                return Err(Error::ShapeMismatch {
                    what: "mean curve",
                    expected: self.tau - 1,
                    found: mean.len(),
                });
            }
        }
        if let Some(link) = &self.linkage {
            if link.split_m < 2 || link.split_m >= self.tau {
                return Err(Error::InvalidConfig("linkage split outside 2..tau".into()));
            }
            let (early, late) = (link.split_m - 1, self.tau - link.split_m);
            if link.rho.nrows() != k || link.rho.ncols() == 0 || link.rho.ncols() > late || k > early {
                return Err(Error::ShapeMismatch {
                    what: "linkage matrix",
                    expected: k,
                    found: link.rho.nrows(),
                });
            }
            if !(link.late_sd >= 0.0) {
                return Err(Error::InvalidConfig(
                    "late-block noise scale must be non-negative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Everything used to generate a synthetic series.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub mean: Vec<f64>,
    /// True eigenfunctions (`(tau - 1) x K_true`); with linkage these are
    /// supported on the early block only.
    pub basis: DMatrix<f64>,
    /// Process scores (`n x K_true`).
    pub scores: DMatrix<f64>,
    pub var_coefficients: Vec<DMatrix<f64>>,
    pub innovation_cov: DMatrix<f64>,
    /// Late-block eigenfunctions (`(tau - 1) x S`) when linked.
    pub late_basis: Option<DMatrix<f64>>,
    pub late_scores: Option<DMatrix<f64>>,
    pub rho: Option<DMatrix<f64>>,
}

/// Grid abscissae `x_i = (i - 1) / (tau - 1)` for curve indices `i = 2..=tau`.
fn abscissae(tau: usize) -> Vec<f64> {
    (1..tau).map(|i| i as f64 / (tau - 1) as f64).collect()
}

/// Gram-Schmidt (applied twice) of the raw basis columns under `<f, g> = w sum f g`.
pub fn orthonormalize(raw: &DMatrix<f64>, w: f64) -> Result<DMatrix<f64>> {
    let mut q = raw.clone();
    for j in 0..q.ncols() {
        for _ in 0..2 {
            for i in 0..j {
                let proj = w * q.column(i).dot(&q.column(j));
                let qi = q.column(i).into_owned();
                q.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let norm = math::sqrt(w * q.column(j).norm_squared());
        if !(norm > 1e-10) {
            return Err(Error::InvalidConfig(
                "basis functions are linearly dependent on this grid".into(),
            ));
        }
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    Ok(q)
}

fn raw_basis(family: BasisFamily, x: &[f64], count: usize) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), count, |i, k| {
        let order = (k + 1) as f64;
        match family {
            BasisFamily::Sine => libm::sin(order * core::f64::consts::PI * x[i]),
            BasisFamily::Polynomial => libm::pow(x[i], order),
        }
    })
}

/// `w`-orthonormal basis of `count` functions on a block of grid columns,
/// zero elsewhere.
fn block_basis(family: BasisFamily, x: &[f64], cols: core::ops::Range<usize>, count: usize) -> Result<DMatrix<f64>> {
    let block_x = &x[cols.clone()];
    let w = crate::updating::block_weight(block_x.len());
    let local = orthonormalize(&raw_basis(family, block_x, count), w)?;
    let mut out = DMatrix::zeros(x.len(), count);
    out.rows_mut(cols.start, cols.len()).copy_from(&local);
    Ok(out)
}

/// Square root factor of a covariance matrix.
fn covariance_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = nalgebra::SymmetricEigen::new(cov.clone());
    if eig.eigenvalues.iter().any(|v| *v < -1e-12) {
        return Err(Error::InvalidConfig(
            "innovation covariance is not positive semidefinite".into(),
        ));
    }
    let sqrt = eig.eigenvalues.map(|v| math::sqrt(v.max(0.0)));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
}

fn normal_vector<R: Rng>(rng: &mut R, k: usize) -> DVector<f64> {
    DVector::from_fn(k, |_, _| rng.sample(StandardNormal))
}

/// Draws a series from `spec`; deterministic in `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<(FunctionalTimeSeries, GroundTruth)> {
    spec.validate()?;
    let len = spec.tau - 1;
    let k = spec.k_true;
    let x = abscissae(spec.tau);
    let basis = match &spec.linkage {
        Some(link) => block_basis(spec.basis, &x, 0..link.split_m - 1, k)?,
        None => orthonormalize(&raw_basis(spec.basis, &x, k), 1.0 / (spec.tau - 2) as f64)?,
    };
    let late_basis = match &spec.linkage {
        Some(link) => Some(block_basis(spec.basis, &x, link.split_m - 1..len, link.rho.ncols())?),
        None => None,
    };
    let factor = covariance_factor(&spec.innovation_cov)?;
    let mean = spec.mean.clone().unwrap_or_else(|| alloc::vec![0.0; len]);

    let mut rng = stream_rng(spec.seed, 0);
    let p = spec.var_coefficients.len();
    let total = spec.burn_in + spec.n;
    let mut history: Vec<DVector<f64>> = alloc::vec![DVector::zeros(k); p];
    let mut scores = DMatrix::zeros(spec.n, k);
    for t in 0..total {
        let mut b = &factor * normal_vector(&mut rng, k);
        for (j, a) in spec.var_coefficients.iter().enumerate() {
            b += a * &history[history.len() - 1 - j];
        }
        if t >= spec.burn_in {
            scores.row_mut(t - spec.burn_in).copy_from(&b.transpose());
        }
        if p > 0 {
            history.remove(0);
            history.push(b);
        }
    }

    let late_scores = spec.linkage.as_ref().map(|link| {
        let s = link.rho.ncols();
        let noise = DMatrix::from_fn(spec.n, s, |_, _| link.late_sd * rng.sample::<f64, _>(StandardNormal));
        &scores * &link.rho + noise
    });

    let mut values = &scores * basis.transpose();
    if let (Some(lb), Some(ls)) = (&late_basis, &late_scores) {
        values += ls * lb.transpose();
    }
    for t in 0..spec.n {
        for i in 0..len {
            let e: f64 = rng.sample(StandardNormal);
            values[(t, i)] += mean[i] + spec.noise_sd * e;
        }
    }
    let grid = IntradayGrid::uniform(spec.tau, 5)?;
    let fts = FunctionalTimeSeries::new(grid, values)?;
    Ok((
        fts,
        GroundTruth {
            mean,
            basis,
            scores,
            var_coefficients: spec.var_coefficients.clone(),
            innovation_cov: spec.innovation_cov.clone(),
            late_basis,
            late_scores,
            rho: spec.linkage.as_ref().map(|l| l.rho.clone()),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        for family in [BasisFamily::Sine, BasisFamily::Polynomial] {
            let x = abscissae(40);
            let w = 1.0 / 38.0;
            let q = orthonormalize(&raw_basis(family, &x, 4), w).unwrap();
            let gram = q.transpose() * &q * w;
            assert!((gram - DMatrix::identity(4, 4)).amax() < 1e-10);
        }
    }

    #[test]
    fn zero_noise_zero_dynamics_gives_mean() {
        let mut spec = SynthSpec::diagonal_ar1(20, 10, 0.0, &[0.0, 0.0], 0.0, 3);
        spec.mean = Some((0..9).map(|i| i as f64 * 0.1).collect());
        let (fts, truth) = generate(&spec).unwrap();
        for t in 0..20 {
            assert_eq!(fts.curve(t), truth.mean);
        }
    }

    #[test]
    fn non_stationary_rejected() {
        let spec = SynthSpec::diagonal_ar1(20, 10, 1.0, &[1.0], 0.1, 0);
        assert!(matches!(generate(&spec), Err(Error::NonStationary { .. })));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let spec = SynthSpec::diagonal_ar1(30, 12, 0.5, &[1.0, 0.5], 0.1, 9);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn linked_blocks_are_supported_on_their_blocks() {
        let mut spec = SynthSpec::diagonal_ar1(30, 12, 0.5, &[1.0], 0.0, 1);
        spec.linkage = Some(LinkedBlocks {
            split_m: 5,
            rho: DMatrix::from_element(1, 1, 2.0),
            late_sd: 0.0,
        });
        let (fts, truth) = generate(&spec).unwrap();
        let late = truth.late_basis.unwrap();
        assert!(truth.basis.rows(4, 7).iter().all(|v| *v == 0.0));
        assert!(late.rows(0, 4).iter().all(|v| *v == 0.0));
        let ls = truth.late_scores.unwrap();
        for t in 0..30 {
            assert!((ls[(t, 0)] - 2.0 * truth.scores[(t, 0)]).abs() < 1e-12);
            assert!((fts.values()[(t, 6)] - ls[(t, 0)] * late[(6, 0)]).abs() < 1e-12);
        }
    }
}
