//! Conjugate-Gaussian helpers shared by the Gibbs blocks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::std_normal;

/// A Gaussian given in information form: precision `P` and `b = P * mean`.
#[derive(Debug, Clone)]
pub struct GaussianInfo {
    pub precision: DMatrix<f64>,
    pub shift: DVector<f64>,
}

/// Mean and Cholesky factor of a Gaussian given in information form.
#[derive(Debug, Clone)]
pub struct GaussianDraw {
    pub mean: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl GaussianInfo {
    pub fn factor(self, context: &str) -> Result<GaussianDraw> {
        let chol = self.precision.cholesky().ok_or_else(|| {
            Error::contract(format!("{context}: posterior precision is not positive definite"))
        })?;
        let mean = chol.solve(&self.shift);
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("{context}: non-finite posterior mean")));
        }
        Ok(GaussianDraw { mean, chol })
    }
}

impl GaussianDraw {
    /// `mean + L^{-T} z` with `P = L L^T`, which has covariance `P^{-1}`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        &self.mean + self.sample_centered(rng)
    }

    /// Zero-mean draw with covariance `P^{-1}`.
    pub fn sample_centered<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| std_normal(rng));
        self.chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .expect("cholesky factor has a positive diagonal")
    }

    /// `P^{-1} b`, the mean for another shift under the same precision.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}
