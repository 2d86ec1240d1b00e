//! Horseshoe shrinkage via the inverse-Gamma auxiliary-variable scheme.
//!
//! With `beta_j ~ N(0, psi_j * tau)`, `sqrt(psi_j), sqrt(tau) ~ C+(0, 1)`,
//! introducing `psi_j | nu_j ~ IG(1/2, 1/nu_j)`, `nu_j ~ IG(1/2, 1)` (and the
//! same for `tau` with `xi`) makes every full conditional inverse-Gamma:
//!
//! ```text
//! psi_j | .  ~ IG(1, 1/nu_j + beta_j^2 / (2 tau))
//! tau   | .  ~ IG((n + 1) / 2, 1/xi + sum_j beta_j^2 / (2 psi_j))
//! nu_j  | .  ~ IG(1, 1 + 1/psi_j)
//! xi    | .  ~ IG(1, 1 + 1/tau)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::inv_gamma;

/// Lower bound applied to every sampled scale.
pub const SCALE_FLOOR: f64 = 1e-12;

/// Local and global variance scales for one block of coefficients.
///
/// `psi` and `tau` hold squared scales: the prior variance of coefficient `j`
/// is `psi[j] * tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeBlock {
    pub psi: Vec<f64>,
    pub tau: f64,
    pub nu_aux: Vec<f64>,
    pub xi_aux: f64,
}

impl HorseshoeBlock {
    pub fn new(len: usize) -> Self {
        Self {
            psi: vec![1.0; len],
            tau: 1.0,
            nu_aux: vec![1.0; len],
            xi_aux: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// Implied prior variance of coefficient `j`.
    pub fn prior_variance(&self, j: usize) -> f64 {
        self.psi[j] * self.tau
    }

    /// Draws a fresh set of scales from the prior hierarchy.
    pub fn sample_prior<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let xi_aux = inv_gamma(rng, 0.5, 1.0);
        let tau = inv_gamma(rng, 0.5, 1.0 / xi_aux).max(SCALE_FLOOR);
        let nu_aux: Vec<f64> = (0..len).map(|_| inv_gamma(rng, 0.5, 1.0)).collect();
        let psi = nu_aux
            .iter()
            .map(|&nu| inv_gamma(rng, 0.5, 1.0 / nu).max(SCALE_FLOOR))
            .collect();
        Self {
            psi,
            tau,
            nu_aux,
            xi_aux,
        }
    }

    pub fn is_valid(&self) -> bool {
        let pos = |v: &f64| *v > 0.0 && v.is_finite();
        self.psi.iter().all(pos)
            && self.nu_aux.iter().all(pos)
            && pos(&self.tau)
            && pos(&self.xi_aux)
            && self.psi.len() == self.nu_aux.len()
    }
}

/// One Gibbs pass over the block's scales given the current coefficients
/// (already centred at their prior mean).
pub fn update_horseshoe<R: Rng + ?Sized>(
    block: &mut HorseshoeBlock,
    coeffs: &[f64],
    rng: &mut R,
) {
    assert_eq!(block.len(), coeffs.len(), "horseshoe block length");
    let n = coeffs.len();
    for j in 0..n {
        let b2 = coeffs[j] * coeffs[j];
        block.psi[j] =
            inv_gamma(rng, 1.0, 1.0 / block.nu_aux[j] + 0.5 * b2 / block.tau).max(SCALE_FLOOR);
    }
    let ss: f64 = coeffs
        .iter()
        .zip(&block.psi)
        .map(|(b, psi)| b * b / psi)
        .sum();
    block.tau = inv_gamma(rng, 0.5 * (n as f64 + 1.0), 1.0 / block.xi_aux + 0.5 * ss)
        .max(SCALE_FLOOR);
    for j in 0..n {
        block.nu_aux[j] = inv_gamma(rng, 1.0, 1.0 + 1.0 / block.psi[j]).max(SCALE_FLOOR);
    }
    block.xi_aux = inv_gamma(rng, 1.0, 1.0 + 1.0 / block.tau).max(SCALE_FLOOR);
}
