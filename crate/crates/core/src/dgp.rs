//! Synthetic data from the Monte Carlo designs:
//!
//! ```text
//! y_t = A1 y_{t-1} + L1 f_t + L2 q_t + eta_t,   y_0 = 0
//! f_t ~ N(mu(y_{t-1}), 1e-4 I_3),  q_t ~ N(0, I_2),  eta_t ~ t_nu(0, 0.01^2 I)
//! ```
//!
//! with four choices of `mu`: zero (design 1, which also sets `L1 = 0`),
//! a trigonometric mix (2), a threshold switch on the first series (3) and
//! a cubic-plus-rectifier form (4).

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{write_matrix_csv, Period, TransformCode};
use crate::error::{Error, Result};
use crate::rng::{chi_squared, std_normal, substream};

pub const DGP_Q_F: usize = 3;
pub const DGP_Q_Q: usize = 2;
pub const FACTOR_VAR: f64 = 1e-4;
pub const ETA_SCALE: f64 = 0.01;
pub const EXPLOSION_BOUND: f64 = 1e6;
pub const MAX_ATTEMPTS: usize = 100;
const B_SD: [f64; 3] = [0.15, 0.075, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub dgp_id: u8,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_t")]
    pub t_len: usize,
    /// Degrees of freedom of `eta`; 1e4 for design 1 and 4 otherwise when absent.
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub replication_count: usize,
}

fn default_m() -> usize {
    16
}

fn default_t() -> usize {
    250
}

fn default_reps() -> usize {
    50
}

impl DgpConfig {
    pub fn new(dgp_id: u8, t_len: usize, seed: u64, replication_count: usize) -> Self {
        Self {
            dgp_id,
            m: default_m(),
            t_len,
            nu: None,
            seed,
            replication_count,
        }
    }

    pub fn nu(&self) -> f64 {
        self.nu
            .unwrap_or(if self.dgp_id == 1 { 1e4 } else { 4.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.dgp_id) {
            return Err(Error::config("dgp_id", format!("{} is not one of 1, 2, 3, 4", self.dgp_id)));
        }
        if self.m < 3 {
            return Err(Error::config("m", "designs use the first and third series; need m >= 3"));
        }
        if self.t_len < 2 {
            return Err(Error::config("t_len", "need at least two periods"));
        }
        if !(self.nu() > 2.0 && self.nu().is_finite()) {
            return Err(Error::config("nu", "degrees of freedom must exceed 2"));
        }
        if self.replication_count == 0 {
            return Err(Error::config("replication_count", "must be at least 1"));
        }
        Ok(())
    }
}

/// One realisation of the design matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpParams {
    pub a1: DMatrix<f64>,
    /// `M x 3`.
    pub lambda1: DMatrix<f64>,
    /// `M x 2`.
    pub lambda2: DMatrix<f64>,
    /// Three `3 x M` matrices.
    pub b: [DMatrix<f64>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpDraw {
    /// `y_1 .. y_T`.
    pub y: DMatrix<f64>,
    pub f_true: DMatrix<f64>,
    pub params: DgpParams,
    /// Parameter draws discarded because the path exploded.
    pub attempts: usize,
}

pub fn draw_dgp_params<R: Rng + ?Sized>(cfg: &DgpConfig, rng: &mut R) -> DgpParams {
    let m = cfg.m;
    let a1 = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            0.45
        } else {
            0.01 * std_normal(rng)
        }
    });
    let mut lambda1 = DMatrix::from_fn(m, DGP_Q_F, |_, _| 0.35 + 0.1 * std_normal(rng));
    if cfg.dgp_id == 1 {
        lambda1.fill(0.0);
    }
    let lambda2 = DMatrix::from_fn(m, DGP_Q_Q, |_, _| std_normal(rng));
    let b = B_SD.map(|sd| DMatrix::from_fn(DGP_Q_F, m, |_, _| sd * std_normal(rng)));
    DgpParams {
        a1,
        lambda1,
        lambda2,
        b,
    }
}

/// Conditional mean of the three factors given `y_{t-1}`.
pub fn factor_mean(dgp_id: u8, y_lag: &DVector<f64>, params: &DgpParams) -> DVector<f64> {
    let b = &params.b;
    match dgp_id {
        2 => {
            let s = y_lag[0] * y_lag[2] * PI;
            &b[0] * y_lag.map(|v| (v * s).cos())
                + &b[1] * y_lag.map(|v| (v - 0.5).abs())
                + &b[2] * y_lag.map(f64::sin)
        }
        // A zero first series takes the second branch.
        3 => {
            if y_lag[0] < 0.0 {
                &b[0] * y_lag
            } else {
                &b[1] * y_lag
            }
        }
        4 => &b[0] * y_lag.map(|v| v * v * v) + &b[1] * y_lag.map(|v| v.max(0.0)),
        _ => DVector::zeros(DGP_Q_F),
    }
}

/// Scale-mixture draw of `t_nu(0, scale^2 I)`: one chi-squared per period
/// shared across series.
pub fn draw_eta<R: Rng + ?Sized>(m: usize, nu: f64, scale: f64, rng: &mut R) -> DVector<f64> {
    let w = (nu / chi_squared(rng, nu)).sqrt();
    DVector::from_fn(m, |_, _| scale * w * std_normal(rng))
}

/// Iterates the design from `y_0 = 0`. Fails with [`Error::Explosive`] if
/// any value leaves `[-1e6, 1e6]`.
pub fn simulate_path<R: Rng + ?Sized>(cfg: &DgpConfig, params: &DgpParams, rng: &mut R) -> Result<DgpDraw> {
    let (m, t_len, nu) = (cfg.m, cfg.t_len, cfg.nu());
    let mut y = DMatrix::zeros(t_len, m);
    let mut f_true = DMatrix::zeros(t_len, DGP_Q_F);
    let mut prev = DVector::zeros(m);
    let sd_f = FACTOR_VAR.sqrt();
    for t in 0..t_len {
        let mu = factor_mean(cfg.dgp_id, &prev, params);
        let f = DVector::from_fn(DGP_Q_F, |j, _| mu[j] + sd_f * std_normal(rng));
        let q = DVector::from_fn(DGP_Q_Q, |_, _| std_normal(rng));
        let eta = draw_eta(m, nu, ETA_SCALE, rng);
        let next = &params.a1 * &prev + &params.lambda1 * &f + &params.lambda2 * q + eta;
        let max_abs = next.amax();
        if !(max_abs <= EXPLOSION_BOUND) {
            return Err(Error::Explosive {
                attempts: 1,
                max_abs,
            });
        }
        y.set_row(t, &next.transpose());
        f_true.set_row(t, &f.transpose());
        prev = next;
    }
    Ok(DgpDraw {
        y,
        f_true,
        params: params.clone(),
        attempts: 1,
    })
}

/// One replication, redrawing the parameters when a path explodes.
pub fn simulate_replication(cfg: &DgpConfig, rep: usize) -> Result<DgpDraw> {
    let mut worst = 0.0f64;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = substream(cfg.seed, &[rep as u64, attempt as u64]);
        let params = draw_dgp_params(cfg, &mut rng);
        match simulate_path(cfg, &params, &mut rng) {
            Ok(mut d) => {
                d.attempts = attempt + 1;
                return Ok(d);
            }
            Err(Error::Explosive { max_abs, .. }) => worst = worst.max(max_abs),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Explosive {
        attempts: MAX_ATTEMPTS,
        max_abs: worst,
    })
}

/// `cfg.replication_count` independent replications, each on its own
/// substream so results do not depend on scheduling.
pub fn run_replications(cfg: &DgpConfig) -> Result<Vec<DgpDraw>> {
    cfg.validate()?;
    (0..cfg.replication_count)
        .into_par_iter()
        .map(|rep| simulate_replication(cfg, rep))
        .collect()
}

/// Column names used for simulated series.
pub fn series_names(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("y{i:02}")).collect()
}

/// First period label of simulated data.
pub fn synthetic_start() -> Period {
    Period { year: 2000, quarter: 1 }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Serialize)]
struct TruthEntry {
    file: String,
    attempts: usize,
    a1: Vec<Vec<f64>>,
    lambda1: Vec<Vec<f64>>,
    lambda2: Vec<Vec<f64>>,
    b1: Vec<Vec<f64>>,
    b2: Vec<Vec<f64>>,
    b3: Vec<Vec<f64>>,
    f_true: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct TruthManifest<'a> {
    config: &'a DgpConfig,
    nu: f64,
    replications: Vec<TruthEntry>,
}

/// Writes `rep_NNN.csv` per replication, `transforms.json` (every series
/// is used as is) and `truth.json` with the parameters behind each file.
pub fn write_replications(dir: &Path, cfg: &DgpConfig, draws: &[DgpDraw]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names = series_names(cfg.m);
    let periods = synthetic_start().range(cfg.t_len);
    let mut entries = Vec::with_capacity(draws.len());
    for (i, d) in draws.iter().enumerate() {
        let file = format!("rep_{i:03}.csv");
        write_matrix_csv(&dir.join(&file), &periods, &names, &d.y)?;
        entries.push(TruthEntry {
            file,
            attempts: d.attempts,
            a1: rows(&d.params.a1),
            lambda1: rows(&d.params.lambda1),
            lambda2: rows(&d.params.lambda2),
            b1: rows(&d.params.b[0]),
            b2: rows(&d.params.b[1]),
            b3: rows(&d.params.b[2]),
            f_true: rows(&d.f_true),
        });
    }
    let codes: std::collections::BTreeMap<&String, TransformCode> =
        names.iter().map(|n| (n, TransformCode::Level)).collect();
    let write_json = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write_json("transforms.json", serde_json::to_string_pretty(&codes).expect("codes serialise"))?;
    let manifest = TruthManifest {
        config: cfg,
        nu: cfg.nu(),
        replications: entries,
    };
    write_json("truth.json", serde_json::to_string_pretty(&manifest).expect("truth serialises"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(cfg: &DgpConfig, seed: u64) -> DgpParams {
        draw_dgp_params(cfg, &mut substream(seed, &[]))
    }

    #[test]
    fn design_one_is_linear() {
        let cfg = DgpConfig::new(1, 50, 0, 1);
        let p = params(&cfg, 1);
        assert!(p.lambda1.iter().all(|v| *v == 0.0));
        assert!((0..16).all(|i| p.a1[(i, i)] == 0.45));
        assert_eq!(p.b[0].shape(), (3, 16));
    }

    #[test]
    fn loading_mean() {
        let cfg = DgpConfig::new(2, 50, 0, 1);
        let mut rng = substream(2, &[]);
        let n = 10_000;
        let total: f64 = (0..n)
            .map(|_| draw_dgp_params(&cfg, &mut rng).lambda1.mean())
            .sum();
        assert!((total / n as f64 - 0.35).abs() < 0.01);
    }

    #[test]
    fn factor_mean_hand_cases() {
        let cfg = DgpConfig::new(2, 50, 0, 1);
        let p = params(&cfg, 3);
        let zero = DVector::zeros(16);
        let ones = DVector::from_element(16, 1.0);
        let halves = DVector::from_element(16, 0.5);
        let expect = &p.b[0] * &ones + &p.b[1] * &halves;
        assert!((factor_mean(2, &zero, &p) - expect).amax() < 1e-15);

        // tie on the first series routes to the second branch
        assert_eq!(factor_mean(3, &zero, &p), &p.b[1] * &zero);
        let mut y = DVector::from_element(16, 0.3);
        y[0] = -0.2;
        assert_eq!(factor_mean(3, &y, &p), &p.b[0] * &y);
        y[0] = 0.2;
        assert_eq!(factor_mean(3, &y, &p), &p.b[1] * &y);

        let neg = DVector::from_element(16, -0.7);
        let cubed = neg.map(|v| v * v * v);
        assert!((factor_mean(4, &neg, &p) - &p.b[0] * cubed).amax() < 1e-15);
        assert_eq!(factor_mean(1, &ones, &p), DVector::zeros(3));
    }

    #[test]
    fn no_shock_limit() {
        let cfg = DgpConfig::new(1, 20, 0, 1);
        let mut p = params(&cfg, 4);
        p.lambda2.fill(0.0);
        let mut rng = substream(5, &[]);
        let mut prev = DVector::zeros(16);
        for _ in 0..20 {
            prev = &p.a1 * &prev;
        }
        assert_eq!(prev, DVector::zeros(16));
        // with noise the path stays finite and small
        let d = simulate_path(&cfg, &p, &mut rng).unwrap();
        assert!(d.y.amax() < 1.0);
    }

    #[test]
    fn near_gaussian_and_heavy_tails() {
        let mut rng = substream(6, &[]);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| draw_eta(1, 1e4, 1.0, &mut rng)[0]).collect();
        let m2 = draws.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let m4 = draws.iter().map(|v| v.powi(4)).sum::<f64>() / n as f64;
        assert!((m4 / (m2 * m2) - 3.0).abs() < 0.1);

        let heavy: Vec<f64> = (0..n).map(|_| draw_eta(1, 4.0, 1.0, &mut rng)[0]).collect();
        let mut abs: Vec<f64> = heavy.iter().map(|v| v.abs()).collect();
        abs.sort_by(f64::total_cmp);
        // robust sigma from the median absolute deviation
        let sigma = abs[n / 2] / 0.674_489_750_196_081_7;
        let tail = abs.iter().filter(|v| **v > 3.0 * sigma).count() as f64 / n as f64;
        assert!(tail > 3.0 * 0.0027, "{tail}");
    }

    #[test]
    fn replications_are_reproducible_and_distinct() {
        let cfg = DgpConfig::new(3, 60, 11, 3);
        let a = run_replications(&cfg).unwrap();
        let b = run_replications(&cfg).unwrap();
        assert_eq!(a.len(), 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.y, y.y);
        }
        assert_ne!(a[0].y[(0, 0)], a[1].y[(0, 0)]);
    }

    #[test]
    fn invalid_design_rejected() {
        let cfg = DgpConfig::new(5, 60, 1, 1);
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("dgp_id"));
    }
}
