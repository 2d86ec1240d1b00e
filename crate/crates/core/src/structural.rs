//! Sign-restricted static factors as structural shocks: generalized
//! impulse responses, asymmetry probabilities and quantile-grid
//! sensitivity curves.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::gibbs::ChainOutput;
use crate::model::{roll_lags, LoadingConstraint, StepShocks};
use crate::rng::substream;

/// Impact restrictions: one row per variable, one column per shock.
/// Fixed values are in the variables' original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignSpec {
    pub variables: Vec<String>,
    pub shocks: Vec<String>,
    pub cells: Vec<Vec<LoadingConstraint>>,
}

impl SignSpec {
    /// Demand, monetary, supply and financial shocks on the nine-variable
    /// macro-financial system: a 25 basis point funds-rate impact for
    /// monetary policy and a unit excess-bond-premium impact for
    /// financial conditions.
    pub fn macro_financial() -> Self {
        use LoadingConstraint::{Fixed, Free, Negative as N, Positive as P};
        let variables = [
            "GDPC1", "PCECC96", "PNFIx", "HRLYCOMP", "EBP", "PCEPILFE", "UNRATE", "UMCSENTx", "FEDFUNDS",
        ];
        let cells = vec![
            vec![P, N, N, N],
            vec![Free, Free, N, N],
            vec![N, Free, Free, N],
            vec![Free, Free, Free, Free],
            vec![Free, Free, Free, Fixed(1.0)],
            vec![P, N, P, N],
            vec![N, P, P, P],
            vec![P, Free, Free, N],
            vec![P, Fixed(0.25), Free, N],
        ];
        Self {
            variables: variables.iter().map(|s| s.to_string()).collect(),
            shocks: ["demand", "monetary", "supply", "financial"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            cells,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.shocks.len();
        if q == 0 {
            return Err(Error::config("sign_spec.shocks", "need at least one shock"));
        }
        if self.cells.len() != self.variables.len() {
            return Err(Error::config("sign_spec.cells", "one row per variable"));
        }
        if let Some(r) = self.cells.iter().position(|row| row.len() != q) {
            return Err(Error::config(
                "sign_spec.cells",
                format!("row {} has {} cells for {q} shocks", self.variables[r], self.cells[r].len()),
            ));
        }
        for (j, name) in self.shocks.iter().enumerate() {
            let col = self.cells.iter().map(|row| row[j]);
            if col.clone().all(|c| c == LoadingConstraint::Free) {
                return Err(Error::config(
                    "sign_spec.cells",
                    format!("shock `{name}` has no restriction"),
                ));
            }
            if col.filter(|c| matches!(c, LoadingConstraint::Fixed(_))).count() > 1 {
                return Err(Error::config(
                    "sign_spec.cells",
                    format!("shock `{name}` has more than one fixed cell"),
                ));
            }
        }
        Ok(())
    }

    /// Row-major `M x Q_q` loading constraints in the dataset's column
    /// order and standardised units. Dataset series not named in the spec
    /// are unrestricted.
    pub fn constraints_for(&self, ds: &Dataset) -> Result<Vec<LoadingConstraint>> {
        self.validate()?;
        for v in &self.variables {
            if !ds.names.contains(v) {
                return Err(Error::config(
                    "sign_spec.variables",
                    format!("`{v}` is not a dataset series"),
                ));
            }
        }
        let q = self.shocks.len();
        let mut out = vec![LoadingConstraint::Free; ds.m() * q];
        for (r, v) in self.variables.iter().enumerate() {
            let i = ds.names.iter().position(|n| n == v).unwrap();
            for j in 0..q {
                out[i * q + j] = match self.cells[r][j] {
                    LoadingConstraint::Fixed(c) => LoadingConstraint::Fixed(c / ds.standardization.sd[i]),
                    other => other,
                };
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockSpec {
    pub shock_index: usize,
    /// Shock size in standard deviations.
    #[serde(default = "one")]
    pub size_sd: f64,
    /// +1 or -1.
    #[serde(default = "plus")]
    pub sign: i8,
    pub horizon: usize,
    #[serde(default = "default_histories")]
    pub n_histories: usize,
    /// Paths per history and arm.
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "yes")]
    pub antithetic: bool,
    /// Restrict sampled histories to these rows of the estimation sample.
    #[serde(default)]
    pub history_rows: Option<Vec<usize>>,
}

fn one() -> f64 {
    1.0
}

fn plus() -> i8 {
    1
}

fn default_histories() -> usize {
    50
}

fn default_paths() -> usize {
    20
}

fn yes() -> bool {
    true
}

impl ShockSpec {
    pub fn new(shock_index: usize, size_sd: f64, sign: i8, horizon: usize) -> Self {
        Self {
            shock_index,
            size_sd,
            sign,
            horizon,
            n_histories: default_histories(),
            n_paths: default_paths(),
            antithetic: true,
            history_rows: None,
        }
    }

    pub fn with_sign(&self, sign: i8) -> Self {
        Self { sign, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.size_sd > 0.0 && self.size_sd.is_finite()) {
            return Err(Error::config("shock.size_sd", "must be positive"));
        }
        if self.sign != 1 && self.sign != -1 {
            return Err(Error::config("shock.sign", "must be 1 or -1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("shock.horizon", "must be at least 1"));
        }
        if self.n_histories == 0 || self.n_paths == 0 {
            return Err(Error::config("shock.n_paths", "need at least one history and path"));
        }
        if matches!(&self.history_rows, Some(r) if r.is_empty()) {
            return Err(Error::config("shock.history_rows", "empty history filter"));
        }
        Ok(())
    }
}

/// Responses to one shock. Row `h` of each matrix is horizon `h`, with
/// `h = 0` the impact period; columns are variables in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirfResult {
    pub spec: ShockSpec,
    /// Per posterior draw: shocked-path mean minus baseline-path mean.
    pub draws: Vec<DMatrix<f64>>,
    /// Per posterior draw: Monte Carlo standard error of that difference.
    pub mc_se: Vec<DMatrix<f64>>,
}

impl GirfResult {
    pub fn horizons(&self) -> usize {
        self.draws.first().map_or(0, |d| d.nrows())
    }

    pub fn n_vars(&self) -> usize {
        self.draws.first().map_or(0, |d| d.ncols())
    }

    /// 16th, 50th and 84th percentiles across draws.
    pub fn bands(&self) -> [DMatrix<f64>; 3] {
        band_matrices(&self.draws, &[0.16, 0.5, 0.84])
            .try_into()
            .expect("three bands")
    }
}

fn band_matrices(draws: &[DMatrix<f64>], probs: &[f64]) -> Vec<DMatrix<f64>> {
    let (r, c) = draws[0].shape();
    let mut out = vec![DMatrix::zeros(r, c); probs.len()];
    let mut buf = Vec::with_capacity(draws.len());
    for i in 0..r {
        for j in 0..c {
            buf.clear();
            buf.extend(draws.iter().map(|d| d[(i, j)]));
            buf.sort_by(f64::total_cmp);
            for (k, p) in probs.iter().enumerate() {
                out[k][(i, j)] = quantile_sorted(&buf, *p);
            }
        }
    }
    out
}

/// Linear-interpolation quantile of an ascending sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Generalized impulse responses: for each posterior draw and sampled
/// history, paths with and without the shock share their random numbers,
/// and the response is the mean difference.
///
/// A shock with a fixed impact cell is scaled so the fixed variable moves
/// by `c * size_sd`; any other shock adds `size_sd * sqrt(v_q)`.
pub fn girf(chain: &ChainOutput, ds: &Dataset, spec: &ShockSpec, seed: u64) -> Result<GirfResult> {
    spec.validate()?;
    if chain.draws.is_empty() {
        return Err(Error::contract("chain has no draws"));
    }
    let d = chain.dims;
    if spec.shock_index >= d.q_q {
        return Err(Error::config(
            "shock.shock_index",
            format!("{} static factors, index {}", d.q_q, spec.shock_index),
        ));
    }
    let rows: Vec<usize> = match &spec.history_rows {
        Some(r) => {
            if let Some(bad) = r.iter().find(|&&t| t > ds.t_len()) {
                return Err(Error::config("shock.history_rows", format!("row {bad} beyond sample")));
            }
            r.clone()
        }
        None => (0..ds.t_len()).collect(),
    };
    let histories: Vec<Vec<f64>> = rows.iter().map(|&t| ds.lags_for(t)).collect::<Result<_>>()?;
    check_dim("girf lags", d.k, histories[0].len())?;
    let fixed = chain.lambda_q_constraints.len() == d.m * d.q_q
        && (0..d.m).any(|i| {
            matches!(
                chain.lambda_q_constraints[i * d.q_q + spec.shock_index],
                LoadingConstraint::Fixed(_)
            )
        });
    let sd = &ds.standardization.sd;
    let h_len = spec.horizon + 1;
    let sign = spec.sign as f64;

    let per_draw: Vec<(DMatrix<f64>, DMatrix<f64>)> = chain
        .draws
        .par_iter()
        .enumerate()
        .map(|(di, draw)| {
            let mut rng = substream(seed, &[di as u64]);
            let scale = if fixed {
                1.0
            } else {
                draw.v_q[spec.shock_index].sqrt()
            };
            let mut impulse = vec![0.0; d.q_q];
            impulse[spec.shock_index] = sign * spec.size_sd * scale;
            let mut sum = DMatrix::zeros(h_len, d.m);
            let mut sum_sq = DMatrix::zeros(h_len, d.m);
            let mut units = 0usize;
            for _ in 0..spec.n_histories {
                let x0 = &histories[rng.random_range(0..histories.len())];
                let mut k = 0;
                while k < spec.n_paths {
                    let shocks: Vec<StepShocks> = (0..h_len)
                        .map(|_| StepShocks::draw(d.m, d.q_f, d.q_q, &mut rng))
                        .collect();
                    let pair = spec.antithetic && k + 1 < spec.n_paths;
                    let mut unit = path_difference(draw, x0, &shocks, &impulse);
                    if pair {
                        let neg: Vec<StepShocks> = shocks.iter().map(StepShocks::negated).collect();
                        unit = (unit + path_difference(draw, x0, &neg, &impulse)) * 0.5;
                        k += 2;
                    } else {
                        k += 1;
                    }
                    sum_sq += unit.component_mul(&unit);
                    sum += unit;
                    units += 1;
                }
            }
            let n = units as f64;
            let mean = &sum / n;
            let se = DMatrix::from_fn(h_len, d.m, |h, i| {
                if units < 2 {
                    return 0.0;
                }
                let var = ((sum_sq[(h, i)] - n * mean[(h, i)].powi(2)) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            });
            let to_orig = |m: DMatrix<f64>| DMatrix::from_fn(h_len, d.m, |h, i| m[(h, i)] * sd[i]);
            (to_orig(mean), to_orig(se))
        })
        .collect();
    let (draws, mc_se) = per_draw.into_iter().unzip();
    Ok(GirfResult {
        spec: spec.clone(),
        draws,
        mc_se,
    })
}

fn path_difference(
    draw: &crate::model::ParameterDraw,
    x0: &[f64],
    shocks: &[StepShocks],
    impulse: &[f64],
) -> DMatrix<f64> {
    let mut xb = x0.to_vec();
    let mut xs = x0.to_vec();
    let mut out = DMatrix::zeros(shocks.len(), draw.m());
    for (h, s) in shocks.iter().enumerate() {
        let yb = draw.step(&xb, s, None);
        let ys = draw.step(&xs, s, (h == 0).then_some(impulse));
        out.set_row(h, &(&ys - &yb).transpose());
        roll_lags(&mut xb, yb.as_slice());
        roll_lags(&mut xs, ys.as_slice());
    }
    out
}

/// Per variable and horizon, the share of draws whose positive-shock
/// response exceeds the median of the sign-flipped negative-shock
/// responses. Exact ties count one half.
pub fn asymmetry_probability(pos: &GirfResult, neg: &GirfResult) -> Result<DMatrix<f64>> {
    if pos.draws.is_empty() || neg.draws.is_empty() {
        return Err(Error::contract("empty impulse responses"));
    }
    check_dim("asymmetry horizons", pos.horizons(), neg.horizons())?;
    check_dim("asymmetry variables", pos.n_vars(), neg.n_vars())?;
    let (r, c) = (pos.horizons(), pos.n_vars());
    let mut out = DMatrix::zeros(r, c);
    let mut buf = Vec::with_capacity(neg.draws.len());
    for h in 0..r {
        for i in 0..c {
            buf.clear();
            buf.extend(neg.draws.iter().map(|d| -d[(h, i)]));
            buf.sort_by(f64::total_cmp);
            let med = quantile_sorted(&buf, 0.5);
            let score: f64 = pos
                .draws
                .iter()
                .map(|d| {
                    let v = d[(h, i)];
                    if v > med {
                        1.0
                    } else if v == med {
                        0.5
                    } else {
                        0.0
                    }
                })
                .sum();
            out[(h, i)] = score / pos.draws.len() as f64;
        }
    }
    Ok(out)
}

/// `1%, 2%, ..., 99%`.
pub fn percent_grid() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

/// Curves over a quantile grid of one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    /// Series whose lags are moved.
    pub covariate: usize,
    pub grid: Vec<f64>,
    /// Covariate value at each grid point, in original units.
    pub values: Vec<f64>,
    /// Curve names (factors or variables).
    pub curves: Vec<String>,
    /// Per draw: `grid x curves`.
    pub draws: Vec<DMatrix<f64>>,
}

impl SensitivityResult {
    pub fn bands(&self) -> [DMatrix<f64>; 3] {
        band_matrices(&self.draws, &[0.16, 0.5, 0.84])
            .try_into()
            .expect("three bands")
    }
}

/// Lag vectors with every entry at its sample mean except the lags of
/// `covariate`, set to the grid quantiles of that series.
fn grid_inputs(ds: &Dataset, covariate: usize, grid: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let m = ds.m();
    if covariate >= m {
        return Err(Error::config("covariate", format!("index {covariate} with {m} series")));
    }
    if let Some(g) = grid.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
        return Err(Error::config("grid", format!("quantile {g} outside (0, 1)")));
    }
    let means: Vec<f64> = (0..ds.k()).map(|c| ds.x.column(c).mean()).collect();
    let mut col: Vec<f64> = ds.y.column(covariate).iter().copied().collect();
    col.sort_by(f64::total_cmp);
    let mut inputs = Vec::with_capacity(grid.len());
    let mut values = Vec::with_capacity(grid.len());
    for &g in grid {
        let v = quantile_sorted(&col, g);
        let mut x = means.clone();
        for lag in 0..ds.p {
            x[lag * m + covariate] = v;
        }
        inputs.push(x);
        values.push(ds.to_original(covariate, v));
    }
    Ok((inputs, values))
}

/// `mu_j(x(g))` for every factor, draw and grid point.
pub fn factor_sensitivity(
    chain: &ChainOutput,
    ds: &Dataset,
    covariate: usize,
    grid: &[f64],
) -> Result<SensitivityResult> {
    let (inputs, values) = grid_inputs(ds, covariate, grid)?;
    let q_f = chain.dims.q_f;
    let draws = chain
        .draws
        .iter()
        .map(|d| {
            DMatrix::from_fn(grid.len(), q_f, |g, j| d.ensembles[j].predict(&inputs[g]))
        })
        .collect();
    Ok(SensitivityResult {
        covariate,
        grid: grid.to_vec(),
        values,
        curves: (1..=q_f).map(|j| format!("mu{j}")).collect(),
        draws,
    })
}

/// `A x(g) + Lambda_f mu(x(g))` for every variable, in original units.
pub fn observable_sensitivity(
    chain: &ChainOutput,
    ds: &Dataset,
    covariate: usize,
    grid: &[f64],
) -> Result<SensitivityResult> {
    let (inputs, values) = grid_inputs(ds, covariate, grid)?;
    let m = chain.dims.m;
    let draws = chain
        .draws
        .iter()
        .map(|d| {
            let mut out = DMatrix::zeros(grid.len(), m);
            for (g, x) in inputs.iter().enumerate() {
                let y = d.predictive_mean(x);
                for i in 0..m {
                    out[(g, i)] = ds.to_original(i, y[i]);
                }
            }
            out
        })
        .collect();
    Ok(SensitivityResult {
        covariate,
        grid: grid.to_vec(),
        values,
        curves: ds.names.clone(),
        draws,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// One block per shock: percentile bands of the positive and negative
/// responses and the asymmetry probability.
pub fn write_irf_csv(
    path: &Path,
    names: &[String],
    blocks: &[(String, GirfResult, GirfResult)],
) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    w.write_record([
        "shock", "variable", "horizon", "pos_p16", "pos_p50", "pos_p84", "neg_p16", "neg_p50",
        "neg_p84", "asym_prob",
    ])
    .map_err(err)?;
    for (shock, pos, neg) in blocks {
        let pb = pos.bands();
        let nb = neg.bands();
        let asym = asymmetry_probability(pos, neg)?;
        for (i, name) in names.iter().enumerate() {
            for h in 0..pos.horizons() {
                let rec = [
                    shock.clone(),
                    name.clone(),
                    h.to_string(),
                    pb[0][(h, i)].to_string(),
                    pb[1][(h, i)].to_string(),
                    pb[2][(h, i)].to_string(),
                    nb[0][(h, i)].to_string(),
                    nb[1][(h, i)].to_string(),
                    nb[2][(h, i)].to_string(),
                    asym[(h, i)].to_string(),
                ];
                w.write_record(&rec).map_err(err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per covariate, curve and grid point.
pub fn write_sensitivity_csv(path: &Path, kind: &str, results: &[(String, SensitivityResult)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    w.write_record(["kind", "covariate", "curve", "quantile", "value", "p16", "p50", "p84"])
        .map_err(err)?;
    for (covariate, s) in results {
        let b = s.bands();
        for (c, curve) in s.curves.iter().enumerate() {
            for (g, q) in s.grid.iter().enumerate() {
                let rec = [
                    kind.to_string(),
                    covariate.clone(),
                    curve.clone(),
                    format!("{q:.2}"),
                    s.values[g].to_string(),
                    b[0][(g, c)].to_string(),
                    b[1][(g, c)].to_string(),
                    b[2][(g, c)].to_string(),
                ];
                w.write_record(&rec).map_err(err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
