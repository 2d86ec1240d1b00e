//! Draws of the full joint prior, used to validate the sampler by
//! comparing prior moments with those of alternating sweeps and data
//! regeneration.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{SamplerConfig, SamplerData, LAMBDA_Q_PRIOR_VAR};
use crate::bart::TreeEnsemble;
use crate::error::Result;
use crate::horseshoe::HorseshoeBlock;
use crate::model::{LoadingConstraint, ModelDims, ModelState};
use crate::rng::{inv_gamma, std_normal};

/// A state drawn from the joint prior given the covariates in `data`.
/// Trees are drawn from their prior truncated to `min_leaf_obs`, which is
/// the tree prior the sampler targets.
pub fn draw_from_prior<R: Rng + ?Sized>(
    dims: ModelDims,
    cfg: &SamplerConfig,
    data: &SamplerData,
    rng: &mut R,
) -> Result<ModelState> {
    let mut s = ModelState::initial(dims, cfg.bart.prior.s_count);
    let (m, k) = (dims.m, dims.k);
    let ig = &cfg.ig;

    s.hs_a = HorseshoeBlock::sample_prior(m * k, rng);
    for i in 0..m * k {
        let (r, c) = (i / k, i % k);
        s.coefs.a[(r, c)] =
            s.coefs.prior_mean[(r, c)] + s.hs_a.prior_variance(i).sqrt() * std_normal(rng);
    }
    s.hs_f = (0..m).map(|_| HorseshoeBlock::sample_prior(dims.q_f, rng)).collect();
    for r in 0..m {
        for j in 0..dims.q_f {
            s.loadings.lambda_f[(r, j)] = s.hs_f[r].prior_variance(j).sqrt() * std_normal(rng);
        }
    }
    if let Some(cons) = &cfg.lambda_q_constraints {
        s.loadings.lambda_q_constraints = cons.clone();
    }
    let sd_q = LAMBDA_Q_PRIOR_VAR.sqrt();
    for r in 0..m {
        for j in 0..dims.q_q {
            let z = sd_q * std_normal(rng);
            s.loadings.lambda_q[(r, j)] = match s.loadings.constraint(r, j) {
                LoadingConstraint::Free => z,
                LoadingConstraint::Positive => z.abs(),
                LoadingConstraint::Negative => -z.abs(),
                LoadingConstraint::Fixed(c) => c,
            };
        }
    }
    for v in s.variances.omega.iter_mut() {
        *v = inv_gamma(rng, ig.a_omega, ig.b_omega);
    }
    for v in s.variances.v_q.iter_mut() {
        *v = inv_gamma(rng, ig.a_q, ig.b_q);
    }
    for v in s.variances.v_f.iter_mut() {
        *v = inv_gamma(rng, ig.a_f, ig.b_f);
    }
    s.ensembles = (0..dims.q_f)
        .map(|_| TreeEnsemble::sample_prior(&cfg.bart, &data.cov, rng))
        .collect();
    for j in 0..dims.q_f {
        let sd = s.variances.v_f[j].sqrt();
        for t in 0..dims.t_len {
            s.factors.f[(t, j)] = s.ensembles[j].fitted(t) + sd * std_normal(rng);
        }
    }
    for j in 0..dims.q_q {
        let sd = s.variances.v_q[j].sqrt();
        for t in 0..dims.t_len {
            s.factors.q[(t, j)] = sd * std_normal(rng);
        }
    }
    s.check_invariants()?;
    Ok(s)
}

/// `y_t = A x_t + Lambda_f f_t + Lambda_q q_t + eta_t` for every row of
/// `x`, using the state's factor paths.
pub fn simulate_observations<R: Rng + ?Sized>(
    state: &ModelState,
    x: &DMatrix<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let mut y = x * state.coefs.a.transpose();
    if state.dims.q_f > 0 {
        y += &state.factors.f * state.loadings.lambda_f.transpose();
    }
    if state.dims.q_q > 0 {
        y += &state.factors.q * state.loadings.lambda_q.transpose();
    }
    let sd: DVector<f64> = state.variances.omega.map(f64::sqrt);
    for t in 0..y.nrows() {
        for i in 0..y.ncols() {
            y[(t, i)] += sd[i] * std_normal(rng);
        }
    }
    y
}
