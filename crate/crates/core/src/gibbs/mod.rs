//! Gibbs sampler over all full conditionals of the factor-BART VAR.
//!
//! One sweep updates, in order: VAR coefficients, nonlinear-factor
//! loadings, static-factor loadings, nonlinear factors, static factors,
//! one BART backfit per factor, the variances and finally the Horseshoe
//! scales. Each block draws from its own substream keyed by
//! `(seed, iteration, block, index)`, so a sweep is reproducible
//! regardless of thread count.

mod chain;
mod geweke;
mod store;

pub use chain::{
    load_checkpoint, run_chain, run_chain_with, save_checkpoint, ChainOutput, Checkpoint, RunOptions,
    CHECKPOINT_VERSION,
};
pub use geweke::{draw_from_prior, simulate_observations};
pub use store::{read_chain, read_draw_block, write_chain, write_draw_store};

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bart::{backfit_sweep, BartConfig, Covariates, MoveStats};
use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::horseshoe::update_horseshoe;
use crate::linalg::GaussianInfo;
use crate::model::{IgHyper, LoadingConstraint, ModelState};
use crate::rng::{derive_seed, inv_gamma, substream, truncated_normal, HalfLine, SimRng};

/// Prior variance of every unrestricted static-factor loading.
pub const LAMBDA_Q_PRIOR_VAR: f64 = 100.0;

/// Residual used for the nonlinear-factor update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorResidual {
    /// `y_t - A x_t - Lambda_q q_t`: conditions on the static factors.
    #[default]
    NetOfStatic,
    /// `y_t - A x_t`: ignores the static factors when drawing `f`.
    GrossOfStatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "default_burn")]
    pub n_burn: usize,
    #[serde(default = "default_save")]
    pub n_save: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default)]
    pub seed: u64,
    /// Nonlinear factors.
    pub q_f: usize,
    /// Static factors.
    pub q_q: usize,
    #[serde(default)]
    pub bart: BartConfig,
    #[serde(default)]
    pub ig: IgHyper,
    #[serde(default)]
    pub factor_residual: FactorResidual,
    /// Row-major `M x Q_q` restrictions on `Lambda_q`; all free if absent.
    #[serde(default)]
    pub lambda_q_constraints: Option<Vec<LoadingConstraint>>,
    /// Keep the latent factor paths in every saved draw.
    #[serde(default = "default_true")]
    pub store_factor_paths: bool,
}

fn default_burn() -> usize {
    2000
}

fn default_save() -> usize {
    2000
}

fn default_thin() -> usize {
    2
}

fn default_true() -> bool {
    true
}

impl SamplerConfig {
    pub fn new(q_f: usize, q_q: usize) -> Self {
        Self {
            n_burn: default_burn(),
            n_save: default_save(),
            thin: default_thin(),
            seed: 0,
            q_f,
            q_q,
            bart: BartConfig::default(),
            ig: IgHyper::default(),
            factor_residual: FactorResidual::default(),
            lambda_q_constraints: None,
            store_factor_paths: true,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.n_save == 0 {
            return Err(Error::config("n_save", "must be at least 1"));
        }
        if self.thin == 0 {
            return Err(Error::config("thin", "must be at least 1"));
        }
        self.bart.validate()?;
        self.ig.validate()?;
        if let Some(c) = &self.lambda_q_constraints {
            if c.len() != m * self.q_q {
                return Err(Error::config(
                    "lambda_q_constraints",
                    format!("expected {} entries (M x Q_q), got {}", m * self.q_q, c.len()),
                ));
            }
            for con in c {
                if let LoadingConstraint::Fixed(v) = con {
                    if !v.is_finite() {
                        return Err(Error::config("lambda_q_constraints", "fixed value must be finite"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Total sweeps, burn-in included.
    pub fn total_iterations(&self) -> usize {
        self.n_burn + self.n_save * self.thin
    }
}

/// Observations and the derived quantities every sweep reuses.
#[derive(Debug, Clone)]
pub struct SamplerData {
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub xtx: DMatrix<f64>,
    pub cov: Covariates,
}

impl SamplerData {
    pub fn new(y: DMatrix<f64>, x: DMatrix<f64>) -> Result<Self> {
        check_dim("sampler rows", y.nrows(), x.nrows())?;
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite observation".into()));
        }
        let xtx = x.transpose() * &x;
        let cov = Covariates::from_matrix(&x);
        Ok(Self { y, x, xtx, cov })
    }

    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        Self::new(ds.y.clone(), ds.x.clone())
    }

    pub fn t_len(&self) -> usize {
        self.y.nrows()
    }

    pub fn m(&self) -> usize {
        self.y.ncols()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }
}

/// Identifies the random stream of one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepKey {
    pub seed: u64,
    pub iter: u64,
}

impl SweepKey {
    /// Seed for `block` of this sweep; per-unit streams hang off it.
    pub fn block(&self, block: Block) -> u64 {
        derive_seed(self.seed, &[self.iter, block as u64])
    }
}

/// Blocks of one sweep, in update order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    VarCoefficients = 1,
    LoadingsF = 2,
    LoadingsQ = 3,
    FactorsF = 4,
    FactorsQ = 5,
    Bart = 6,
    Variances = 7,
    Horseshoe = 8,
}

impl Block {
    pub const ALL: [Block; 8] = [
        Block::VarCoefficients,
        Block::LoadingsF,
        Block::LoadingsQ,
        Block::FactorsF,
        Block::FactorsQ,
        Block::Bart,
        Block::Variances,
        Block::Horseshoe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::VarCoefficients => "var_coefficients",
            Block::LoadingsF => "loadings_f",
            Block::LoadingsQ => "loadings_q",
            Block::FactorsF => "factors_f",
            Block::FactorsQ => "factors_q",
            Block::Bart => "bart",
            Block::Variances => "variances",
            Block::Horseshoe => "horseshoe",
        }
    }
}

/// Diagnostics of one sweep.
#[derive(Debug, Clone, Default)]
pub struct SweepStats {
    /// Tree-move counts per nonlinear factor.
    pub moves: Vec<MoveStats>,
    /// Wall-clock seconds per block, in [`Block::ALL`] order.
    pub block_seconds: [f64; 8],
}

/// Posterior of one regression row with a diagonal Gaussian prior.
fn conjugate_row(
    gram: &DMatrix<f64>,
    cross: &DVector<f64>,
    noise_var: f64,
    prior_prec: &[f64],
    prior_mean: &[f64],
) -> GaussianInfo {
    let mut precision = gram / noise_var;
    let mut shift = cross / noise_var;
    for j in 0..prior_prec.len() {
        precision[(j, j)] += prior_prec[j];
        shift[j] += prior_prec[j] * prior_mean[j];
    }
    GaussianInfo { precision, shift }
}

/// `Y - X A' - F Lambda_f' - Q Lambda_q'` with the chosen terms.
fn residuals(state: &ModelState, data: &SamplerData, a: bool, f: bool, q: bool) -> DMatrix<f64> {
    let mut r = data.y.clone();
    if a {
        r -= &data.x * state.coefs.a.transpose();
    }
    if f && state.dims.q_f > 0 {
        r -= &state.factors.f * state.loadings.lambda_f.transpose();
    }
    if q && state.dims.q_q > 0 {
        r -= &state.factors.q * state.loadings.lambda_q.transpose();
    }
    r
}

/// Draws every row of `A` from its Gaussian conditional given the factors,
/// loadings, `Omega` and the Horseshoe scales in `state.hs_a`. Equation `s`
/// uses the stream `(stream, s)`.
pub fn update_var_coefficients(state: &mut ModelState, data: &SamplerData, stream: u64) -> Result<()> {
    let (m, k) = (state.dims.m, state.dims.k);
    check_dim("update_var_coefficients K", k, data.k())?;
    let r = residuals(state, data, false, true, true);
    let xtr = data.x.transpose() * r;
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|s| {
            let prior_prec: Vec<f64> =
                (0..k).map(|j| 1.0 / state.hs_a.prior_variance(s * k + j)).collect();
            let prior_mean: Vec<f64> = state.coefs.prior_mean.row(s).iter().copied().collect();
            let info = conjugate_row(
                &data.xtx,
                &xtr.column(s).into_owned(),
                state.variances.omega[s],
                &prior_prec,
                &prior_mean,
            );
            let draw = info.factor("VAR coefficients")?;
            let mut rng = substream(stream, &[s as u64]);
            Ok(draw.sample(&mut rng).iter().copied().collect())
        })
        .collect::<Result<_>>()?;
    for (s, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            state.coefs.a[(s, j)] = v;
        }
    }
    Ok(())
}

/// Draws each row of `Lambda_f` given everything else, with the row's
/// Horseshoe block as prior.
pub fn update_loadings_f(state: &mut ModelState, data: &SamplerData, stream: u64) -> Result<()> {
    let (m, q_f) = (state.dims.m, state.dims.q_f);
    if q_f == 0 {
        return Ok(());
    }
    let r = residuals(state, data, true, false, true);
    let f = &state.factors.f;
    let gram = f.transpose() * f;
    let cross = f.transpose() * r;
    let zeros = vec![0.0; q_f];
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|s| {
            let hs = &state.hs_f[s];
            let prior_prec: Vec<f64> = (0..q_f).map(|j| 1.0 / hs.prior_variance(j)).collect();
            let info = conjugate_row(
                &gram,
                &cross.column(s).into_owned(),
                state.variances.omega[s],
                &prior_prec,
                &zeros,
            );
            let mut rng = substream(stream, &[s as u64]);
            Ok(info.factor("nonlinear loadings")?.sample(&mut rng).iter().copied().collect())
        })
        .collect::<Result<_>>()?;
    for (s, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            state.loadings.lambda_f[(s, j)] = v;
        }
    }
    Ok(())
}

/// Draws each row of `Lambda_q` under its `N(0, 100)` prior. Rows without
/// restrictions get a joint Gaussian draw; restricted rows are updated one
/// entry at a time from the univariate conditionals, truncated to the
/// required half line, with fixed entries left in place.
pub fn update_loadings_q(state: &mut ModelState, data: &SamplerData, stream: u64) -> Result<()> {
    let (m, q_q) = (state.dims.m, state.dims.q_q);
    if q_q == 0 {
        return Ok(());
    }
    let r = residuals(state, data, true, true, false);
    let qm = &state.factors.q;
    let gram = qm.transpose() * qm;
    let cross = qm.transpose() * r;
    let prior_prec = vec![1.0 / LAMBDA_Q_PRIOR_VAR; q_q];
    let zeros = vec![0.0; q_q];
    let loadings = &state.loadings;
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|s| {
            let info = conjugate_row(
                &gram,
                &cross.column(s).into_owned(),
                state.variances.omega[s],
                &prior_prec,
                &zeros,
            );
            let mut rng = substream(stream, &[s as u64]);
            let constrained = (0..q_q).any(|j| loadings.constraint(s, j) != LoadingConstraint::Free);
            if !constrained {
                let draw = info.factor("static loadings")?.sample(&mut rng);
                return Ok(draw.iter().copied().collect());
            }
            let mut row: Vec<f64> = loadings.lambda_q.row(s).iter().copied().collect();
            for j in 0..q_q {
                let con = loadings.constraint(s, j);
                if let LoadingConstraint::Fixed(c) = con {
                    row[j] = c;
                    continue;
                }
                let pjj = info.precision[(j, j)];
                let others: f64 = (0..q_q)
                    .filter(|&l| l != j)
                    .map(|l| info.precision[(j, l)] * row[l])
                    .sum();
                let mean = (info.shift[j] - others) / pjj;
                let sd = pjj.sqrt().recip();
                row[j] = match con {
                    LoadingConstraint::Positive => truncated_normal(&mut rng, mean, sd, HalfLine::Positive)?,
                    LoadingConstraint::Negative => truncated_normal(&mut rng, mean, sd, HalfLine::Negative)?,
                    _ => mean + sd * crate::rng::std_normal(&mut rng),
                };
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    for (s, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            state.loadings.lambda_q[(s, j)] = v;
        }
    }
    Ok(())
}

/// Draws `f_t` for every `t` from `N(fbar_t, Vbar)` where
/// `Vbar^{-1} = Lambda_f' Omega^{-1} Lambda_f + V_f^{-1}` and the mean
/// combines the observation residual with the BART mean `mu(x_t)`.
pub fn update_factors_f(
    state: &mut ModelState,
    data: &SamplerData,
    residual: FactorResidual,
    stream: u64,
) -> Result<()> {
    let (t_len, q_f) = (state.dims.t_len, state.dims.q_f);
    if q_f == 0 {
        return Ok(());
    }
    let r = residuals(state, data, true, false, residual == FactorResidual::NetOfStatic);
    let lf = &state.loadings.lambda_f;
    let w = DMatrix::from_fn(lf.nrows(), q_f, |i, j| lf[(i, j)] / state.variances.omega[i]);
    let mut precision = w.transpose() * lf;
    for j in 0..q_f {
        precision[(j, j)] += 1.0 / state.variances.v_f[j];
    }
    let signal = r * &w;
    let mu: Vec<Vec<f64>> = state.ensembles.iter().map(|e| e.fitted_values()).collect();
    let draw = GaussianInfo {
        precision,
        shift: DVector::zeros(q_f),
    }
    .factor("nonlinear factors")?;
    let mut rng = substream(stream, &[]);
    for t in 0..t_len {
        let shift = DVector::from_fn(q_f, |j, _| signal[(t, j)] + mu[j][t] / state.variances.v_f[j]);
        let mean = draw.solve(&shift);
        let dev = draw.sample_centered(&mut rng);
        for j in 0..q_f {
            state.factors.f[(t, j)] = mean[j] + dev[j];
        }
    }
    Ok(())
}

/// Draws `q_t` for every `t` given the residual `y_t - A x_t - Lambda_f f_t`.
pub fn update_factors_q(state: &mut ModelState, data: &SamplerData, stream: u64) -> Result<()> {
    let (t_len, q_q) = (state.dims.t_len, state.dims.q_q);
    if q_q == 0 {
        return Ok(());
    }
    let r = residuals(state, data, true, true, false);
    let lq = &state.loadings.lambda_q;
    let w = DMatrix::from_fn(lq.nrows(), q_q, |i, j| lq[(i, j)] / state.variances.omega[i]);
    let mut precision = w.transpose() * lq;
    for j in 0..q_q {
        precision[(j, j)] += 1.0 / state.variances.v_q[j];
    }
    let draw = GaussianInfo {
        precision,
        shift: DVector::zeros(q_q),
    }
    .factor("static factors")?;
    let signal = r * &w;
    let mut rng = substream(stream, &[]);
    for t in 0..t_len {
        let mean = draw.solve(&signal.row(t).transpose());
        let dev = draw.sample_centered(&mut rng);
        for j in 0..q_q {
            state.factors.q[(t, j)] = mean[j] + dev[j];
        }
    }
    Ok(())
}

/// Inverse-Gamma updates of `Omega`, `V_q` and `V_f`.
pub fn update_variances(state: &mut ModelState, data: &SamplerData, ig: &IgHyper, stream: u64) -> Result<()> {
    let d = state.dims;
    let half_t = 0.5 * d.t_len as f64;
    let r = residuals(state, data, true, true, true);
    let mut rng = substream(stream, &[]);
    for s in 0..d.m {
        let ss: f64 = r.column(s).iter().map(|e| e * e).sum();
        state.variances.omega[s] = inv_gamma(&mut rng, ig.a_omega + half_t, ig.b_omega + 0.5 * ss);
    }
    for j in 0..d.q_q {
        let ss: f64 = state.factors.q.column(j).iter().map(|e| e * e).sum();
        state.variances.v_q[j] = inv_gamma(&mut rng, ig.a_q + half_t, ig.b_q + 0.5 * ss);
    }
    for j in 0..d.q_f {
        let ens = &state.ensembles[j];
        let ss: f64 = (0..d.t_len)
            .map(|t| (state.factors.f[(t, j)] - ens.fitted(t)).powi(2))
            .sum();
        state.variances.v_f[j] = inv_gamma(&mut rng, ig.a_f + half_t, ig.b_f + 0.5 * ss);
    }
    let v = &state.variances;
    if v.omega.iter().chain(v.v_q.iter()).chain(v.v_f.iter()).any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::Degenerate("variance draw is not a positive finite number".into()));
    }
    Ok(())
}

/// One backfitting pass per nonlinear factor, with `f_j` as target and
/// `v_f,j` as residual variance.
pub fn update_bart(
    state: &mut ModelState,
    data: &SamplerData,
    cfg: &BartConfig,
    stream: u64,
) -> Result<Vec<MoveStats>> {
    let f = &state.factors.f;
    let v_f = &state.variances.v_f;
    state
        .ensembles
        .par_iter_mut()
        .enumerate()
        .map(|(j, ens)| {
            let targets: Vec<f64> = f.column(j).iter().copied().collect();
            let mut rng = substream(stream, &[j as u64]);
            backfit_sweep(ens, &targets, &data.cov, v_f[j], cfg, &mut rng)
        })
        .collect()
}

/// Horseshoe scales of `A` (centred at its prior mean) and of each row of
/// `Lambda_f`.
pub fn update_shrinkage(state: &mut ModelState, stream: u64) {
    let centred: Vec<f64> = {
        let (m, k) = (state.dims.m, state.dims.k);
        let a = &state.coefs;
        (0..m * k)
            .map(|i| a.a[(i / k, i % k)] - a.prior_mean[(i / k, i % k)])
            .collect()
    };
    let mut rng: SimRng = substream(stream, &[0]);
    update_horseshoe(&mut state.hs_a, &centred, &mut rng);
    if state.dims.q_f == 0 {
        return;
    }
    for (s, block) in state.hs_f.iter_mut().enumerate() {
        let row: Vec<f64> = state.loadings.lambda_f.row(s).iter().copied().collect();
        let mut rng = substream(stream, &[1, s as u64]);
        update_horseshoe(block, &row, &mut rng);
    }
}

/// One full Gibbs sweep. On error `state` is left untouched.
pub fn sweep(
    state: &mut ModelState,
    data: &SamplerData,
    cfg: &SamplerConfig,
    key: SweepKey,
) -> Result<SweepStats> {
    let mut next = state.clone();
    let mut stats = SweepStats::default();
    let mut clock = Instant::now();
    let mut lap = |stats: &mut SweepStats, b: Block| {
        let now = Instant::now();
        stats.block_seconds[b as usize - 1] += (now - clock).as_secs_f64();
        clock = now;
    };
    update_var_coefficients(&mut next, data, key.block(Block::VarCoefficients))?;
    lap(&mut stats, Block::VarCoefficients);
    update_loadings_f(&mut next, data, key.block(Block::LoadingsF))?;
    lap(&mut stats, Block::LoadingsF);
    update_loadings_q(&mut next, data, key.block(Block::LoadingsQ))?;
    lap(&mut stats, Block::LoadingsQ);
    update_factors_f(&mut next, data, cfg.factor_residual, key.block(Block::FactorsF))?;
    lap(&mut stats, Block::FactorsF);
    update_factors_q(&mut next, data, key.block(Block::FactorsQ))?;
    lap(&mut stats, Block::FactorsQ);
    stats.moves = update_bart(&mut next, data, &cfg.bart, key.block(Block::Bart))?;
    lap(&mut stats, Block::Bart);
    update_variances(&mut next, data, &cfg.ig, key.block(Block::Variances))?;
    lap(&mut stats, Block::Variances);
    update_shrinkage(&mut next, key.block(Block::Horseshoe));
    lap(&mut stats, Block::Horseshoe);
    next.check_invariants()?;
    *state = next;
    Ok(stats)
}

/// Starting state for a chain: coefficients at the prior mean, restricted
/// loadings at admissible values, static factors drawn from `N(0, 1)`.
pub fn initial_state(data: &SamplerData, cfg: &SamplerConfig) -> Result<ModelState> {
    let m = data.m();
    let k = data.k();
    if k % m != 0 {
        return Err(Error::contract(format!("{k} regressors is not a multiple of {m} series")));
    }
    cfg.validate(m)?;
    let dims = crate::model::ModelDims::new(m, k / m, cfg.q_f, cfg.q_q, data.t_len())?;
    let mut state = ModelState::initial(dims, cfg.bart.prior.s_count);
    if let Some(cons) = &cfg.lambda_q_constraints {
        state.loadings.lambda_q_constraints = cons.clone();
        for s in 0..m {
            for j in 0..cfg.q_q {
                state.loadings.lambda_q[(s, j)] = match cons[s * cfg.q_q + j] {
                    LoadingConstraint::Free => 0.0,
                    LoadingConstraint::Positive => 1.0,
                    LoadingConstraint::Negative => -1.0,
                    LoadingConstraint::Fixed(c) => c,
                };
            }
        }
    }
    let mut rng = substream(cfg.seed, &[u64::MAX]);
    for v in state.factors.q.iter_mut() {
        *v = crate::rng::std_normal(&mut rng);
    }
    state.check_invariants()?;
    Ok(state)
}
