//! Density scores: log predictive likelihood and CRPS.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Variance floor for moment-matched predictive densities.
pub const VARIANCE_FLOOR: f64 = 1e-10;

/// A score plus whether the variance floor was hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lpl {
    pub value: f64,
    pub floored: bool,
}

pub fn normal_logpdf(y: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln()) - 0.5 * (y - mean).powi(2) / var
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + (v.iter().map(|x| (x - max).exp()).sum::<f64>() / v.len() as f64).ln()
}

/// Log of an equally weighted mixture of univariate Gaussians at `y`.
pub fn lpl_mixture(components: &[(f64, f64)], y: f64) -> Result<Lpl> {
    if components.is_empty() {
        return Err(Error::contract("empty mixture"));
    }
    let mut floored = false;
    let logs: Vec<f64> = components
        .iter()
        .map(|&(m, v)| {
            let v = if v < VARIANCE_FLOOR {
                floored = true;
                VARIANCE_FLOOR
            } else {
                v
            };
            normal_logpdf(y, m, v)
        })
        .collect();
    Ok(Lpl {
        value: log_mean_exp(&logs),
        floored,
    })
}

/// Gaussian with the sample mean and variance of `draws`, evaluated at `y`.
pub fn lpl_from_samples(draws: &[f64], y: f64) -> Result<Lpl> {
    if draws.len() < 2 {
        return Err(Error::contract("need two draws for a moment-matched density"));
    }
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let floored = !(var >= VARIANCE_FLOOR);
    Ok(Lpl {
        value: normal_logpdf(y, mean, if floored { VARIANCE_FLOOR } else { var }),
        floored,
    })
}

/// Multivariate Gaussian with the sample moments of the rows of `draws`,
/// evaluated at `y`. Eigenvalues of the covariance are floored.
pub fn joint_lpl_from_samples(draws: &DMatrix<f64>, y: &[f64]) -> Result<Lpl> {
    let (n, d) = draws.shape();
    check_dim("joint lpl", d, y.len())?;
    if n < 2 {
        return Err(Error::contract("need two draws for a moment-matched density"));
    }
    let mean = DVector::from_fn(d, |j, _| draws.column(j).sum() / n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| draws[(i, j)] - mean[j]);
    let cov = centred.transpose() * centred / (n as f64 - 1.0);
    let mut eig = cov.symmetric_eigen();
    let mut floored = false;
    for v in eig.eigenvalues.iter_mut() {
        if !(*v >= VARIANCE_FLOOR) {
            *v = VARIANCE_FLOOR;
            floored = true;
        }
    }
    let dev = DVector::from_column_slice(y) - mean;
    let proj = eig.eigenvectors.transpose() * dev;
    let quad: f64 = proj.iter().zip(eig.eigenvalues.iter()).map(|(p, l)| p * p / l).sum();
    let logdet: f64 = eig.eigenvalues.iter().map(|l| l.ln()).sum();
    Ok(Lpl {
        value: -0.5 * (d as f64 * LN_2PI + logdet + quad),
        floored,
    })
}

/// Sample CRPS `E|X - y| - E|X - X'| / 2` in O(n log n).
///
/// The pair term uses the spacings of the sorted sample,
/// `sum_i sum_j |x_i - x_j| = 2 sum_k k (n - k) (x_(k+1) - x_(k))`, so a
/// point mass at `y` scores exactly zero.
pub fn crps(draws: &[f64], y: f64) -> Result<f64> {
    let n = draws.len();
    if n < 2 {
        return Err(Error::contract("CRPS needs at least two draws"));
    }
    if draws.iter().any(|v| !v.is_finite()) || !y.is_finite() {
        return Err(Error::Degenerate("non-finite CRPS input".into()));
    }
    let mut x = draws.to_vec();
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let abs_dev = x.iter().map(|v| (v - y).abs()).sum::<f64>() / nf;
    let spread: f64 = (1..n)
        .map(|k| (k as f64) * (nf - k as f64) * (x[k] - x[k - 1]))
        .sum::<f64>()
        * 2.0
        / (nf * nf);
    Ok((abs_dev - 0.5 * spread).max(0.0))
}
