//! Domain types of the factor-BART VAR and the pure functions evaluating its
//! conditional moments and likelihood.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bart::{EnsembleSnapshot, TreeEnsemble};
use crate::error::{check_dim, Error, Result};
use crate::horseshoe::HorseshoeBlock;
use crate::rng::std_normal;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Own-first-lag prior mean of the VAR coefficients.
pub const OWN_LAG_PRIOR_MEAN: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Observed series.
    pub m: usize,
    /// Lag order.
    pub p: usize,
    /// Regressors, `m * p`.
    pub k: usize,
    /// Nonlinear factors.
    pub q_f: usize,
    /// Static factors.
    pub q_q: usize,
    /// Sample length after trimming the pre-sample lags.
    pub t_len: usize,
}

impl ModelDims {
    pub fn new(m: usize, p: usize, q_f: usize, q_q: usize, t_len: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::config("m", "need at least one series"));
        }
        if p == 0 {
            return Err(Error::config("p", "lag order must be positive"));
        }
        if t_len == 0 {
            return Err(Error::config("t_len", "empty sample"));
        }
        Ok(Self {
            m,
            p,
            k: m * p,
            q_f,
            q_q,
            t_len,
        })
    }
}

/// Linear VAR coefficients and their prior mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarCoefficients {
    /// `M x K`, column block `l` holds the coefficients on lag `l + 1`.
    pub a: DMatrix<f64>,
    pub prior_mean: DMatrix<f64>,
}

impl VarCoefficients {
    /// Coefficients set to the prior mean: 0.8 on each series' own first
    /// lag and zero elsewhere.
    pub fn at_prior_mean(m: usize, p: usize) -> Self {
        let prior_mean = var_prior_mean(m, p);
        Self {
            a: prior_mean.clone(),
            prior_mean,
        }
    }
}

pub fn var_prior_mean(m: usize, p: usize) -> DMatrix<f64> {
    let mut mean = DMatrix::zeros(m, m * p);
    for i in 0..m {
        mean[(i, i)] = OWN_LAG_PRIOR_MEAN;
    }
    mean
}

/// Prior restriction attached to one static-factor loading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingConstraint {
    #[default]
    Free,
    Positive,
    Negative,
    Fixed(f64),
}

impl LoadingConstraint {
    pub fn admits(&self, v: f64) -> bool {
        match *self {
            LoadingConstraint::Free => v.is_finite(),
            LoadingConstraint::Positive => v > 0.0 && v.is_finite(),
            LoadingConstraint::Negative => v < 0.0 && v.is_finite(),
            LoadingConstraint::Fixed(c) => v == c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorLoadings {
    /// `M x Q_f`.
    pub lambda_f: DMatrix<f64>,
    /// `M x Q_q`.
    pub lambda_q: DMatrix<f64>,
    /// Constraint per entry of `lambda_q`, `M x Q_q` row-major.
    pub lambda_q_constraints: Vec<LoadingConstraint>,
}

impl FactorLoadings {
    pub fn constraint(&self, i: usize, j: usize) -> LoadingConstraint {
        self.lambda_q_constraints[i * self.lambda_q.ncols() + j]
    }

    pub fn has_constraints(&self) -> bool {
        self.lambda_q_constraints
            .iter()
            .any(|c| *c != LoadingConstraint::Free)
    }

    /// Checks every constrained entry of `lambda_q`.
    pub fn constraints_hold(&self) -> bool {
        let (m, q) = self.lambda_q.shape();
        (0..m).all(|i| (0..q).all(|j| self.constraint(i, j).admits(self.lambda_q[(i, j)])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFactorPaths {
    /// `T x Q_f` nonlinear factors.
    pub f: DMatrix<f64>,
    /// `T x Q_q` static factors.
    pub q: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseVariances {
    /// Idiosyncratic variances, one per series.
    pub omega: DVector<f64>,
    /// Static-factor variances.
    pub v_q: DVector<f64>,
    /// State-equation variances of the nonlinear factors.
    pub v_f: DVector<f64>,
}

/// Inverse-Gamma hyperparameters (shape `a`, scale `b`) of the variance
/// priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IgHyper {
    pub a_omega: f64,
    pub b_omega: f64,
    pub a_q: f64,
    pub b_q: f64,
    #[serde(default = "default_a_f")]
    pub a_f: f64,
    #[serde(default = "default_b_f")]
    pub b_f: f64,
}

fn default_a_f() -> f64 {
    30.0
}

fn default_b_f() -> f64 {
    3.0
}

impl Default for IgHyper {
    fn default() -> Self {
        Self {
            a_omega: 0.01,
            b_omega: 0.01,
            a_q: 30.0,
            b_q: 3.0,
            a_f: default_a_f(),
            b_f: default_b_f(),
        }
    }
}

impl IgHyper {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("ig.a_omega", self.a_omega),
            ("ig.b_omega", self.b_omega),
            ("ig.a_q", self.a_q),
            ("ig.b_q", self.b_q),
            ("ig.a_f", self.a_f),
            ("ig.b_f", self.b_f),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be a positive finite number"));
            }
        }
        Ok(())
    }
}

/// All parameters and latent paths at one MCMC iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub dims: ModelDims,
    pub coefs: VarCoefficients,
    pub loadings: FactorLoadings,
    pub factors: LatentFactorPaths,
    pub variances: NoiseVariances,
    /// Single block over all `M * K` VAR coefficients.
    pub hs_a: HorseshoeBlock,
    /// One block per row of `lambda_f`.
    pub hs_f: Vec<HorseshoeBlock>,
    /// One ensemble per nonlinear factor.
    pub ensembles: Vec<TreeEnsemble>,
}

impl ModelState {
    /// Neutral starting point: coefficients at their prior mean, zero
    /// loadings and factors, unit variances and single-leaf trees.
    pub fn initial(dims: ModelDims, s_count: usize) -> Self {
        let ModelDims {
            m, p, k, q_f, q_q, t_len,
        } = dims;
        Self {
            dims,
            coefs: VarCoefficients::at_prior_mean(m, p),
            loadings: FactorLoadings {
                lambda_f: DMatrix::zeros(m, q_f),
                lambda_q: DMatrix::zeros(m, q_q),
                lambda_q_constraints: vec![LoadingConstraint::Free; m * q_q],
            },
            factors: LatentFactorPaths {
                f: DMatrix::zeros(t_len, q_f),
                q: DMatrix::zeros(t_len, q_q),
            },
            variances: NoiseVariances {
                omega: DVector::from_element(m, 1.0),
                v_q: DVector::from_element(q_q, 1.0),
                v_f: DVector::from_element(q_f, 1.0),
            },
            hs_a: HorseshoeBlock::new(m * k),
            hs_f: (0..m).map(|_| HorseshoeBlock::new(q_f)).collect(),
            ensembles: (0..q_f).map(|_| TreeEnsemble::new(s_count, t_len)).collect(),
        }
    }

    /// `A x_t + Lambda_f f_t`.
    pub fn conditional_mean(&self, x_t: &[f64], f_t: &[f64]) -> Result<DVector<f64>> {
        conditional_mean(&self.coefs.a, &self.loadings.lambda_f, x_t, f_t)
    }

    /// Variance of the composite shock of equation `s` once the nonlinear
    /// factor innovations and static factors are folded in:
    /// `sum_j lf_sj^2 vf_j + sum_j lq_sj^2 vq_j + omega_s`.
    pub fn per_equation_shock_variance(&self, s: usize) -> Result<f64> {
        if s >= self.dims.m {
            return Err(Error::contract(format!(
                "equation index {s} out of range for {} series",
                self.dims.m
            )));
        }
        let lf = &self.loadings.lambda_f;
        let lq = &self.loadings.lambda_q;
        let v = &self.variances;
        let from_f: f64 = (0..lf.ncols()).map(|j| lf[(s, j)].powi(2) * v.v_f[j]).sum();
        let from_q: f64 = (0..lq.ncols()).map(|j| lq[(s, j)].powi(2) * v.v_q[j]).sum();
        Ok(from_f + from_q + v.omega[s])
    }

    /// `log N(y_t; A x_t + Lambda_f f_t + Lambda_q q_t, Omega)` using the
    /// state's factor values at `t`.
    pub fn log_observation_density(&self, y_t: &[f64], x_t: &[f64], t: usize) -> Result<f64> {
        let m = self.dims.m;
        check_dim("observation", m, y_t.len())?;
        if t >= self.factors.f.nrows() {
            return Err(Error::contract(format!("time index {t} beyond factor paths")));
        }
        let f_t: Vec<f64> = self.factors.f.row(t).iter().copied().collect();
        let q_t: Vec<f64> = self.factors.q.row(t).iter().copied().collect();
        let mut mean = self.conditional_mean(x_t, &f_t)?;
        mean += &self.loadings.lambda_q * DVector::from_vec(q_t);
        gaussian_diag_logpdf(y_t, mean.as_slice(), self.variances.omega.as_slice())
    }

    /// `mu(x)` from the current ensembles.
    pub fn factor_mean(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.ensembles.len(), self.ensembles.iter().map(|e| e.predict(x)))
    }

    /// Parameter values needed for prediction and simulation.
    pub fn to_draw(&self, keep_paths: bool) -> ParameterDraw {
        ParameterDraw {
            a: self.coefs.a.clone(),
            lambda_f: self.loadings.lambda_f.clone(),
            lambda_q: self.loadings.lambda_q.clone(),
            omega: self.variances.omega.clone(),
            v_q: self.variances.v_q.clone(),
            v_f: self.variances.v_f.clone(),
            ensembles: self.ensembles.iter().map(TreeEnsemble::snapshot).collect(),
            f: keep_paths.then(|| self.factors.f.clone()),
            q: keep_paths.then(|| self.factors.q.clone()),
        }
    }

    /// Checks the invariants every emitted state must satisfy.
    pub fn check_invariants(&self) -> Result<()> {
        let d = &self.dims;
        let shape = |name: &'static str, mat: &DMatrix<f64>, r: usize, c: usize| -> Result<()> {
            check_dim(name, r * c, mat.len())?;
            if mat.nrows() != r || mat.ncols() != c {
                return Err(Error::contract(format!("{name} has shape {:?}", mat.shape())));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Degenerate(format!("{name} has non-finite entries")));
            }
            Ok(())
        };
        shape("A", &self.coefs.a, d.m, d.k)?;
        shape("lambda_f", &self.loadings.lambda_f, d.m, d.q_f)?;
        shape("lambda_q", &self.loadings.lambda_q, d.m, d.q_q)?;
        shape("f", &self.factors.f, d.t_len, d.q_f)?;
        shape("q", &self.factors.q, d.t_len, d.q_q)?;
        let v = &self.variances;
        for (name, vec, len) in [
            ("omega", &v.omega, d.m),
            ("v_q", &v.v_q, d.q_q),
            ("v_f", &v.v_f, d.q_f),
        ] {
            check_dim(name, len, vec.len())?;
            if vec.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::Degenerate(format!("{name} has a non-positive entry")));
            }
        }
        if !self.loadings.constraints_hold() {
            return Err(Error::contract("static-factor loading violates its constraint"));
        }
        if !self.hs_a.is_valid() || !self.hs_f.iter().all(HorseshoeBlock::is_valid) {
            return Err(Error::Degenerate("non-positive horseshoe scale".into()));
        }
        check_dim("ensembles", d.q_f, self.ensembles.len())?;
        Ok(())
    }
}

/// `A x + Lambda_f f`.
pub fn conditional_mean(
    a: &DMatrix<f64>,
    lambda_f: &DMatrix<f64>,
    x: &[f64],
    f: &[f64],
) -> Result<DVector<f64>> {
    check_dim("conditional_mean x", a.ncols(), x.len())?;
    check_dim("conditional_mean f", lambda_f.ncols(), f.len())?;
    check_dim("conditional_mean rows", a.nrows(), lambda_f.nrows())?;
    let mut out = a * DVector::from_column_slice(x);
    if !f.is_empty() {
        out += lambda_f * DVector::from_column_slice(f);
    }
    Ok(out)
}

/// Sum of univariate Gaussian log densities with the given variances.
pub fn gaussian_diag_logpdf(y: &[f64], mean: &[f64], var: &[f64]) -> Result<f64> {
    check_dim("logpdf mean", y.len(), mean.len())?;
    check_dim("logpdf variance", y.len(), var.len())?;
    let mut total = 0.0;
    for ((&yi, &mi), &vi) in y.iter().zip(mean).zip(var) {
        if !(vi > 0.0) {
            return Err(Error::contract(format!("non-positive variance {vi}")));
        }
        total += -0.5 * (LN_2PI + vi.ln()) - 0.5 * (yi - mi).powi(2) / vi;
    }
    Ok(total)
}

/// Shifts the lag vector one period: `y` becomes the first lag.
pub fn roll_lags(x: &mut [f64], y: &[f64]) {
    let m = y.len();
    let k = x.len();
    x.copy_within(0..k - m, m);
    x[..m].copy_from_slice(y);
}

/// Parameter values of one saved posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDraw {
    pub a: DMatrix<f64>,
    pub lambda_f: DMatrix<f64>,
    pub lambda_q: DMatrix<f64>,
    pub omega: DVector<f64>,
    pub v_q: DVector<f64>,
    pub v_f: DVector<f64>,
    pub ensembles: Vec<EnsembleSnapshot>,
    pub f: Option<DMatrix<f64>>,
    pub q: Option<DMatrix<f64>>,
}

/// Innovations driving one simulated period, in standard-normal units.
#[derive(Debug, Clone)]
pub struct StepShocks {
    pub w: Vec<f64>,
    pub q: Vec<f64>,
    pub eta: Vec<f64>,
}

impl StepShocks {
    pub fn draw<R: Rng + ?Sized>(m: usize, q_f: usize, q_q: usize, rng: &mut R) -> Self {
        Self {
            w: (0..q_f).map(|_| std_normal(rng)).collect(),
            q: (0..q_q).map(|_| std_normal(rng)).collect(),
            eta: (0..m).map(|_| std_normal(rng)).collect(),
        }
    }

    pub fn negated(&self) -> Self {
        let neg = |v: &Vec<f64>| v.iter().map(|x| -x).collect();
        Self {
            w: neg(&self.w),
            q: neg(&self.q),
            eta: neg(&self.eta),
        }
    }
}

impl ParameterDraw {
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn k(&self) -> usize {
        self.a.ncols()
    }

    pub fn q_f(&self) -> usize {
        self.lambda_f.ncols()
    }

    pub fn q_q(&self) -> usize {
        self.lambda_q.ncols()
    }

    pub fn factor_mean(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.ensembles.len(), self.ensembles.iter().map(|e| e.predict(x)))
    }

    /// Mean of `y_t` given `x_t` with the factor innovations integrated out:
    /// `A x + Lambda_f mu(x)`.
    pub fn predictive_mean(&self, x: &[f64]) -> DVector<f64> {
        let mu = self.factor_mean(x);
        conditional_mean(&self.a, &self.lambda_f, x, mu.as_slice())
            .expect("draw dimensions are consistent")
    }

    /// `Lambda_f V_f Lambda_f' + Lambda_q V_q Lambda_q' + Omega`.
    pub fn shock_covariance(&self) -> DMatrix<f64> {
        let mut cov = DMatrix::from_diagonal(&self.omega);
        if self.q_f() > 0 {
            cov += &self.lambda_f * DMatrix::from_diagonal(&self.v_f) * self.lambda_f.transpose();
        }
        if self.q_q() > 0 {
            cov += &self.lambda_q * DMatrix::from_diagonal(&self.v_q) * self.lambda_q.transpose();
        }
        cov
    }

    /// One period of the model. `impulse` is added to the static factors
    /// after they are drawn.
    pub fn step(&self, x: &[f64], shocks: &StepShocks, impulse: Option<&[f64]>) -> DVector<f64> {
        let mut y = &self.a * DVector::from_column_slice(x);
        if self.q_f() > 0 {
            let mu = self.factor_mean(x);
            let f = DVector::from_fn(self.q_f(), |j, _| mu[j] + self.v_f[j].sqrt() * shocks.w[j]);
            y += &self.lambda_f * f;
        }
        if self.q_q() > 0 {
            let mut q = DVector::from_fn(self.q_q(), |j, _| self.v_q[j].sqrt() * shocks.q[j]);
            if let Some(imp) = impulse {
                for (qj, dj) in q.iter_mut().zip(imp) {
                    *qj += dj;
                }
            }
            y += &self.lambda_q * q;
        }
        for i in 0..y.len() {
            y[i] += self.omega[i].sqrt() * shocks.eta[i];
        }
        y
    }
}

/// Output of [`simulate_paths`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPaths {
    pub y: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

/// Simulates `t_len` periods forward from the lag vector `x0`
/// (`(y_{0}', ..., y_{1-p}')'`).
pub fn simulate_paths<R: Rng + ?Sized>(
    state: &ModelState,
    x0: &[f64],
    t_len: usize,
    rng: &mut R,
) -> Result<SimulatedPaths> {
    let d = state.dims;
    check_dim("simulate_paths lags", d.k, x0.len())?;
    let mut x = x0.to_vec();
    let mut out = SimulatedPaths {
        y: DMatrix::zeros(t_len, d.m),
        f: DMatrix::zeros(t_len, d.q_f),
        q: DMatrix::zeros(t_len, d.q_q),
    };
    for t in 0..t_len {
        let shocks = StepShocks::draw(d.m, d.q_f, d.q_q, rng);
        let mu = state.factor_mean(&x);
        let f = DVector::from_fn(d.q_f, |j, _| {
            mu[j] + state.variances.v_f[j].sqrt() * shocks.w[j]
        });
        let q = DVector::from_fn(d.q_q, |j, _| state.variances.v_q[j].sqrt() * shocks.q[j]);
        let mut y = state.conditional_mean(&x, f.as_slice())?;
        y += &state.loadings.lambda_q * &q;
        for i in 0..d.m {
            y[i] += state.variances.omega[i].sqrt() * shocks.eta[i];
        }
        out.y.set_row(t, &y.transpose());
        out.f.set_row(t, &f.transpose());
        out.q.set_row(t, &q.transpose());
        roll_lags(&mut x, y.as_slice());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_state() -> ModelState {
        let dims = ModelDims::new(1, 1, 1, 1, 1).unwrap();
        let mut s = ModelState::initial(dims, 1);
        s.coefs.a[(0, 0)] = 0.8;
        s.loadings.lambda_f[(0, 0)] = 2.0;
        s
    }

    #[test]
    fn conditional_mean_hand_example() {
        let s = tiny_state();
        let m = s.conditional_mean(&[1.0], &[0.5]).unwrap();
        assert!((m[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn conditional_mean_zero_coefficients() {
        let dims = ModelDims::new(3, 2, 2, 0, 5).unwrap();
        let mut s = ModelState::initial(dims, 1);
        s.coefs.a.fill(0.0);
        let m = s.conditional_mean(&[1.0, -2.0, 3.0, 0.5, 9.0, 1.0], &[4.0, 2.0]).unwrap();
        assert!(m.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn conditional_mean_dimension_mismatch() {
        let s = tiny_state();
        assert!(matches!(
            s.conditional_mean(&[1.0, 2.0], &[0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn shock_variance_examples() {
        let dims = ModelDims::new(1, 1, 2, 1, 3).unwrap();
        let mut s = ModelState::initial(dims, 1);
        s.variances.omega[0] = 0.25;
        assert!((s.per_equation_shock_variance(0).unwrap() - 0.25).abs() < 1e-15);
        s.loadings.lambda_f[(0, 0)] = 1.0;
        s.variances.v_f = DVector::from_vec(vec![0.04, 0.09]);
        s.loadings.lambda_q[(0, 0)] = 2.0;
        s.variances.v_q[0] = 1.0;
        s.variances.omega[0] = 0.01;
        assert!((s.per_equation_shock_variance(0).unwrap() - 4.05).abs() < 1e-12);
        assert!(s.per_equation_shock_variance(1).is_err());
    }

    #[test]
    fn log_density_examples() {
        let dims = ModelDims::new(2, 1, 0, 0, 1).unwrap();
        let mut s = ModelState::initial(dims, 1);
        s.coefs.a.fill(0.0);
        let v = s.log_observation_density(&[0.0, 0.0], &[1.0, 1.0], 0).unwrap();
        assert!((v + 1.837_877_066_41).abs() < 1e-10);

        let dims = ModelDims::new(1, 1, 0, 0, 1).unwrap();
        let mut s = ModelState::initial(dims, 1);
        s.coefs.a.fill(0.0);
        let v = s.log_observation_density(&[1.0], &[0.0], 0).unwrap();
        assert!((v + 1.418_938_533_20).abs() < 1e-10);

        s.variances.omega[0] = 0.0;
        assert!(s.log_observation_density(&[1.0], &[0.0], 0).is_err());
    }

    #[test]
    fn prior_mean_has_own_first_lags_only() {
        let mean = var_prior_mean(3, 2);
        assert_eq!(mean.iter().filter(|v| **v == 0.8).count(), 3);
        for i in 0..3 {
            assert_eq!(mean[(i, i)], 0.8);
        }
        assert_eq!(mean.iter().filter(|v| **v != 0.0).count(), 3);
    }

    #[test]
    fn roll_lags_shifts_blocks() {
        let mut x = vec![1.0, 2.0, 3.0, 4.0];
        roll_lags(&mut x, &[9.0, 8.0]);
        assert_eq!(x, vec![9.0, 8.0, 1.0, 2.0]);
    }

    #[test]
    fn dims_validation() {
        assert!(ModelDims::new(0, 1, 0, 0, 1).is_err());
        assert!(ModelDims::new(2, 0, 0, 0, 1).is_err());
        assert_eq!(ModelDims::new(3, 2, 0, 1, 9).unwrap().k, 6);
    }
}
