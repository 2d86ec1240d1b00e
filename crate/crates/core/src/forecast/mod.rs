//! Predictive simulation from posterior draws, density scores and the
//! recursive out-of-sample protocol.

mod evaluation;
mod scoring;

pub use evaluation::{
    evaluate_origin, recursive_evaluation, write_evaluation, EvaluationConfig, EvaluationReport,
    OriginScores,
};
pub use scoring::{
    crps, joint_lpl_from_samples, lpl_from_samples, lpl_mixture, normal_logpdf, Lpl, VARIANCE_FLOOR,
};

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Standardization};
use crate::error::{check_dim, Error, Result};
use crate::gibbs::ChainOutput;
use crate::model::{roll_lags, StepShocks};
use crate::rng::substream;

/// One-step-ahead predictive density of one posterior draw (original
/// units), used for the Rao-Blackwellised score at `h = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    /// Row of the dataset's `y` the first horizon refers to.
    pub origin: usize,
    /// Per horizon `1..=H`: `n_sim x M` simulated values in original units.
    pub draws: Vec<DMatrix<f64>>,
    pub h1_components: Vec<GaussianComponent>,
    /// Paths simulated per posterior draw; rows of `draws` come in blocks
    /// of this size, one block per draw.
    pub n_per_draw: usize,
}

/// Predictive density used for univariate scores beyond one step ahead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityEstimate {
    /// One Gaussian matched to the pooled paths.
    #[default]
    MomentMatched,
    /// Equal-weight mixture of Gaussians, one matched to each draw's paths.
    DrawMixture,
}

impl ForecastResult {
    pub fn horizon(&self) -> usize {
        self.draws.len()
    }

    pub fn column(&self, h: usize, var: usize) -> Vec<f64> {
        self.draws[h - 1].column(var).iter().copied().collect()
    }

    fn check_h(&self, h: usize) -> Result<()> {
        if h == 0 || h > self.horizon() {
            return Err(Error::contract(format!(
                "horizon {h} outside 1..={}",
                self.horizon()
            )));
        }
        Ok(())
    }
}

/// Simulates every posterior draw `n_per_draw` times from the lag vector
/// of row `origin` of `ds`, `horizon` steps ahead, and maps the results to
/// original units.
pub fn predictive_simulate(
    chain: &ChainOutput,
    ds: &Dataset,
    origin: usize,
    horizon: usize,
    n_per_draw: usize,
    seed: u64,
) -> Result<ForecastResult> {
    if horizon == 0 {
        return Err(Error::contract("forecast horizon must be at least 1"));
    }
    if n_per_draw == 0 {
        return Err(Error::contract("need at least one path per draw"));
    }
    if chain.draws.is_empty() {
        return Err(Error::contract("chain has no draws"));
    }
    let x0 = ds.lags_for(origin)?;
    check_dim("forecast lags", chain.dims.k, x0.len())?;
    let m = chain.dims.m;
    let per_draw: Vec<(Vec<DMatrix<f64>>, GaussianComponent)> = chain
        .draws
        .par_iter()
        .enumerate()
        .map(|(d, draw)| {
            let mut rng = substream(seed, &[d as u64]);
            let mut out = vec![DMatrix::zeros(n_per_draw, m); horizon];
            for path in 0..n_per_draw {
                let mut x = x0.clone();
                for h in 0..horizon {
                    let shocks = StepShocks::draw(m, draw.q_f(), draw.q_q(), &mut rng);
                    let y = draw.step(&x, &shocks, None);
                    out[h].set_row(path, &y.transpose());
                    roll_lags(&mut x, y.as_slice());
                }
            }
            let comp = GaussianComponent {
                mean: draw.predictive_mean(&x0),
                cov: draw.shock_covariance(),
            };
            (out, comp)
        })
        .collect();
    let s = &ds.standardization;
    let n_sim = n_per_draw * chain.draws.len();
    let mut draws = vec![DMatrix::zeros(n_sim, m); horizon];
    let mut comps = Vec::with_capacity(per_draw.len());
    for (d, (paths, comp)) in per_draw.into_iter().enumerate() {
        for (h, mat) in paths.into_iter().enumerate() {
            let orig = s.invert(&mat);
            draws[h].rows_mut(d * n_per_draw, n_per_draw).copy_from(&orig);
        }
        comps.push(to_original(comp, s));
    }
    if draws.iter().any(|d| d.iter().any(|v| !v.is_finite())) {
        return Err(Error::Degenerate("non-finite forecast draw".into()));
    }
    Ok(ForecastResult {
        origin,
        draws,
        h1_components: comps,
        n_per_draw,
    })
}

fn to_original(c: GaussianComponent, s: &Standardization) -> GaussianComponent {
    let m = c.mean.len();
    GaussianComponent {
        mean: DVector::from_fn(m, |i, _| s.back(i, c.mean[i])),
        cov: DMatrix::from_fn(m, m, |i, j| c.cov[(i, j)] * s.sd[i] * s.sd[j]),
    }
}

/// Univariate log predictive likelihood of `realized` for variable `var`.
/// At `h = 1` this is the mixture over posterior draws of the exact
/// one-step Gaussian; beyond that a Gaussian matched to the pooled draws.
pub fn lpl(result: &ForecastResult, realized: f64, h: usize, var: usize) -> Result<Lpl> {
    lpl_with(result, realized, h, var, DensityEstimate::MomentMatched)
}

pub fn lpl_with(
    result: &ForecastResult,
    realized: f64,
    h: usize,
    var: usize,
    density: DensityEstimate,
) -> Result<Lpl> {
    result.check_h(h)?;
    if h == 1 && !result.h1_components.is_empty() {
        let comps: Vec<(f64, f64)> = result
            .h1_components
            .iter()
            .map(|c| (c.mean[var], c.cov[(var, var)]))
            .collect();
        return lpl_mixture(&comps, realized);
    }
    let col = result.column(h, var);
    match density {
        DensityEstimate::MomentMatched => lpl_from_samples(&col, realized),
        DensityEstimate::DrawMixture => {
            let n = result.n_per_draw;
            if n < 2 {
                return Err(Error::contract("a per-draw mixture needs two paths per draw"));
            }
            let comps: Vec<(f64, f64)> = col
                .chunks(n)
                .map(|c| {
                    let mean = c.iter().sum::<f64>() / n as f64;
                    let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                    (mean, var)
                })
                .collect();
            lpl_mixture(&comps, realized)
        }
    }
}

/// Joint log predictive likelihood over `vars` from the moment-matched
/// multivariate Gaussian of the pooled draws.
pub fn joint_lpl(result: &ForecastResult, realized: &[f64], h: usize, vars: &[usize]) -> Result<Lpl> {
    result.check_h(h)?;
    check_dim("joint lpl subset", vars.len(), realized.len())?;
    let d = &result.draws[h - 1];
    let sub = DMatrix::from_fn(d.nrows(), vars.len(), |r, c| d[(r, vars[c])]);
    joint_lpl_from_samples(&sub, realized)
}

/// Scores for one forecast, variables by horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorePanel {
    /// `M x H`.
    pub lpl: DMatrix<f64>,
    /// `M x H`.
    pub crps: DMatrix<f64>,
    /// Joint score over all variables per horizon.
    pub joint_lpl: Vec<f64>,
    /// Scores that hit the variance floor.
    pub floored: usize,
}

impl ScorePanel {
    /// Scores `result` against `realized` (`H x M`, original units).
    pub fn score(result: &ForecastResult, realized: &DMatrix<f64>) -> Result<Self> {
        Self::score_with(result, realized, DensityEstimate::MomentMatched)
    }

    pub fn score_with(result: &ForecastResult, realized: &DMatrix<f64>, density: DensityEstimate) -> Result<Self> {
        let h_max = result.horizon();
        let m = realized.ncols();
        check_dim("realized horizons", h_max, realized.nrows())?;
        check_dim("realized variables", result.draws[0].ncols(), m)?;
        let mut panel = ScorePanel {
            lpl: DMatrix::zeros(m, h_max),
            crps: DMatrix::zeros(m, h_max),
            joint_lpl: vec![0.0; h_max],
            floored: 0,
        };
        let all: Vec<usize> = (0..m).collect();
        for h in 1..=h_max {
            for i in 0..m {
                let y = realized[(h - 1, i)];
                let l = lpl_with(result, y, h, i, density)?;
                panel.floored += l.floored as usize;
                panel.lpl[(i, h - 1)] = l.value;
                panel.crps[(i, h - 1)] = crps(&result.column(h, i), y)?;
            }
            let row: Vec<f64> = realized.row(h - 1).iter().copied().collect();
            let j = joint_lpl(result, &row, h, &all)?;
            panel.floored += j.floored as usize;
            panel.joint_lpl[h - 1] = j.value;
        }
        Ok(panel)
    }

    pub fn horizons(&self) -> usize {
        self.lpl.ncols()
    }

    /// Average LPL across variables at horizon `h` (1-based).
    pub fn mean_lpl(&self, h: usize) -> f64 {
        self.lpl.column(h - 1).mean()
    }

    pub fn mean_crps(&self, h: usize) -> f64 {
        self.crps.column(h - 1).mean()
    }
}

/// Writes predictive quantiles per variable and horizon.
pub fn write_forecast_csv(path: &Path, result: &ForecastResult, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let err = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    w.write_record(["variable", "horizon", "mean", "p05", "p16", "p50", "p84", "p95"])
        .map_err(err)?;
    for h in 1..=result.horizon() {
        for (i, name) in names.iter().enumerate() {
            let mut col = result.column(h, i);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            col.sort_by(f64::total_cmp);
            let q = |p: f64| crate::structural::quantile_sorted(&col, p);
            let rec = [
                name.clone(),
                h.to_string(),
                mean.to_string(),
                q(0.05).to_string(),
                q(0.16).to_string(),
                q(0.50).to_string(),
                q(0.84).to_string(),
                q(0.95).to_string(),
            ];
            w.write_record(&rec).map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
