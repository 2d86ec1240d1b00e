//! Recursive out-of-sample evaluation of a model against a baseline.
//!
//! For each origin `o` both models are estimated on the first `o` rows of
//! the dataset (re-standardised on that subsample), forecast `H` steps and
//! scored against rows `o .. o + H` in original units. Relative scores are
//! LPL differences (model minus baseline) and CRPS ratios (model over
//! baseline).

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{predictive_simulate, DensityEstimate, ScorePanel};
use crate::data::{Dataset, Period};
use crate::error::{Error, Result};
use crate::gibbs::{run_chain, SamplerConfig, SamplerData};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub model: SamplerConfig,
    pub baseline: SamplerConfig,
    /// First origin, as a row index of the dataset's `y`.
    pub start_origin: usize,
    /// Last origin (inclusive).
    pub end_origin: usize,
    pub horizon: usize,
    #[serde(default = "default_paths")]
    pub n_per_draw: usize,
    #[serde(default)]
    pub seed: u64,
    /// Univariate predictive density beyond one step ahead.
    #[serde(default)]
    pub density: DensityEstimate,
}

fn default_paths() -> usize {
    10
}

impl EvaluationConfig {
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.start_origin > self.end_origin {
            return Err(Error::config("start_origin", "must not exceed end_origin"));
        }
        if self.start_origin < 2 {
            return Err(Error::config("start_origin", "need at least two estimation rows"));
        }
        if self.end_origin + self.horizon > ds.t_len() {
            return Err(Error::config(
                "end_origin",
                format!(
                    "origin {} plus horizon {} runs past the {} available rows",
                    self.end_origin,
                    self.horizon,
                    ds.t_len()
                ),
            ));
        }
        if self.n_per_draw == 0 {
            return Err(Error::config("n_per_draw", "must be at least 1"));
        }
        self.model.validate(ds.m())?;
        self.baseline.validate(ds.m())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginScores {
    pub origin: usize,
    pub period: Period,
    pub model: ScorePanel,
    pub baseline: ScorePanel,
}

impl OriginScores {
    /// Mean over variables of the `h = 1` LPL difference.
    pub fn lpl_diff_h1(&self) -> f64 {
        self.model.mean_lpl(1) - self.baseline.mean_lpl(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub names: Vec<String>,
    pub horizon: usize,
    pub origins: Vec<OriginScores>,
    /// Origins that failed, with the error.
    pub skipped: Vec<(usize, String)>,
    /// `M x H` mean over origins of the LPL difference.
    pub lpl_diff: DMatrix<f64>,
    /// `M x H` mean model CRPS over mean baseline CRPS.
    pub crps_ratio: DMatrix<f64>,
    /// Per horizon, averaged across variables.
    pub mean_lpl_diff: Vec<f64>,
    pub mean_crps_ratio: Vec<f64>,
    pub joint_lpl_diff: Vec<f64>,
    /// Running sum over origins of the `h = 1` variable-averaged LPL difference.
    pub cumulative_lpl: Vec<f64>,
}

impl EvaluationReport {
    fn aggregate(names: Vec<String>, horizon: usize, origins: Vec<OriginScores>, skipped: Vec<(usize, String)>) -> Result<Self> {
        if origins.is_empty() {
            return Err(Error::Degenerate(format!(
                "every origin failed: {}",
                skipped.iter().map(|(o, e)| format!("{o}: {e}")).collect::<Vec<_>>().join("; ")
            )));
        }
        let m = names.len();
        let n = origins.len() as f64;
        let mut lpl_diff = DMatrix::zeros(m, horizon);
        let mut crps_model = DMatrix::zeros(m, horizon);
        let mut crps_base = DMatrix::zeros(m, horizon);
        let mut joint = vec![0.0; horizon];
        for o in &origins {
            lpl_diff += (&o.model.lpl - &o.baseline.lpl) / n;
            crps_model += &o.model.crps / n;
            crps_base += &o.baseline.crps / n;
            for h in 0..horizon {
                joint[h] += (o.model.joint_lpl[h] - o.baseline.joint_lpl[h]) / n;
            }
        }
        let ratio = |a: f64, b: f64| if a == b { 1.0 } else { a / b };
        let crps_ratio = DMatrix::from_fn(m, horizon, |i, h| ratio(crps_model[(i, h)], crps_base[(i, h)]));
        let mean_lpl_diff = (0..horizon).map(|h| lpl_diff.column(h).mean()).collect();
        let mean_crps_ratio = (0..horizon)
            .map(|h| ratio(crps_model.column(h).sum(), crps_base.column(h).sum()))
            .collect();
        let cumulative_lpl = origins
            .iter()
            .scan(0.0, |acc, o| {
                *acc += o.lpl_diff_h1();
                Some(*acc)
            })
            .collect();
        Ok(Self {
            names,
            horizon,
            origins,
            skipped,
            lpl_diff,
            crps_ratio,
            mean_lpl_diff,
            mean_crps_ratio,
            joint_lpl_diff: joint,
            cumulative_lpl,
        })
    }
}

fn estimate_and_score(
    cfg: &SamplerConfig,
    sub: &Dataset,
    data: &SamplerData,
    realized: &DMatrix<f64>,
    horizon: usize,
    n_per_draw: usize,
    density: DensityEstimate,
    seed: u64,
) -> Result<ScorePanel> {
    let mut cfg = cfg.clone();
    cfg.seed = derive_seed(seed, &[0]);
    let chain = run_chain(data, &cfg)?;
    let fc = predictive_simulate(&chain, sub, sub.t_len(), horizon, n_per_draw, derive_seed(seed, &[1]))?;
    ScorePanel::score_with(&fc, realized, density)
}

/// Estimates both models on rows `..origin` and scores their forecasts of
/// rows `origin..origin + horizon`.
pub fn evaluate_origin(ds: &Dataset, cfg: &EvaluationConfig, origin: usize) -> Result<OriginScores> {
    let h = cfg.horizon;
    if origin + h > ds.t_len() {
        return Err(Error::contract(format!("origin {origin} + {h} beyond sample")));
    }
    let sub = ds.truncate(origin)?;
    let data = SamplerData::from_dataset(&sub)?;
    let realized = ds.transformed_full.rows(origin + ds.p, h).into_owned();
    let seed = derive_seed(cfg.seed, &[origin as u64]);
    let model = estimate_and_score(&cfg.model, &sub, &data, &realized, h, cfg.n_per_draw, cfg.density, seed)?;
    let baseline = estimate_and_score(&cfg.baseline, &sub, &data, &realized, h, cfg.n_per_draw, cfg.density, seed)?;
    Ok(OriginScores {
        origin,
        period: ds.periods()[origin],
        model,
        baseline,
    })
}

/// Runs every origin from `start_origin` to `end_origin`. Failed origins
/// are recorded in `skipped` and left out of the averages.
pub fn recursive_evaluation(ds: &Dataset, cfg: &EvaluationConfig) -> Result<EvaluationReport> {
    cfg.validate(ds)?;
    let results: Vec<(usize, Result<OriginScores>)> = (cfg.start_origin..=cfg.end_origin)
        .into_par_iter()
        .map(|o| (o, evaluate_origin(ds, cfg, o)))
        .collect();
    let mut origins = Vec::new();
    let mut skipped = Vec::new();
    for (o, r) in results {
        match r {
            Ok(s) => origins.push(s),
            Err(e) => skipped.push((o, e.to_string())),
        }
    }
    EvaluationReport::aggregate(ds.names.clone(), cfg.horizon, origins, skipped)
}

/// Writes `scores.csv` (variable, horizon, metric, value),
/// `cumulative_lpl.csv` and `summary.json` into `dir`.
pub fn write_evaluation(dir: &Path, report: &EvaluationReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fmt = |path: &Path, e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let path = dir.join("scores.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| fmt(&path, e))?;
    w.write_record(["variable", "horizon", "metric", "value"]).map_err(|e| fmt(&path, e))?;
    let n = report.origins.len() as f64;
    for h in 0..report.horizon {
        for (i, name) in report.names.iter().enumerate() {
            let mean_of = |f: &dyn Fn(&OriginScores) -> f64| report.origins.iter().map(f).sum::<f64>() / n;
            let rows = [
                ("lpl_diff", report.lpl_diff[(i, h)]),
                ("crps_ratio", report.crps_ratio[(i, h)]),
                ("lpl_model", mean_of(&|o| o.model.lpl[(i, h)])),
                ("lpl_baseline", mean_of(&|o| o.baseline.lpl[(i, h)])),
                ("crps_model", mean_of(&|o| o.model.crps[(i, h)])),
                ("crps_baseline", mean_of(&|o| o.baseline.crps[(i, h)])),
            ];
            for (metric, v) in rows {
                w.write_record([name.clone(), (h + 1).to_string(), metric.to_string(), v.to_string()])
                    .map_err(|e| fmt(&path, e))?;
            }
        }
        for (metric, v) in [
            ("lpl_diff", report.mean_lpl_diff[h]),
            ("crps_ratio", report.mean_crps_ratio[h]),
        ] {
            w.write_record(["average".to_string(), (h + 1).to_string(), metric.to_string(), v.to_string()])
                .map_err(|e| fmt(&path, e))?;
        }
        w.write_record([
            "joint".to_string(),
            (h + 1).to_string(),
            "lpl_diff".to_string(),
            report.joint_lpl_diff[h].to_string(),
        ])
        .map_err(|e| fmt(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("cumulative_lpl.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| fmt(&path, e))?;
    w.write_record(["origin", "period", "lpl_diff", "cumulative"]).map_err(|e| fmt(&path, e))?;
    for (o, cum) in report.origins.iter().zip(&report.cumulative_lpl) {
        w.write_record([
            o.origin.to_string(),
            o.period.to_string(),
            o.lpl_diff_h1().to_string(),
            cum.to_string(),
        ])
        .map_err(|e| fmt(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    #[derive(Serialize)]
    struct Summary<'a> {
        origins: usize,
        skipped: &'a [(usize, String)],
        mean_lpl_diff: &'a [f64],
        mean_crps_ratio: &'a [f64],
        joint_lpl_diff: &'a [f64],
        final_cumulative_lpl: f64,
        floored_scores: usize,
    }
    let summary = Summary {
        origins: report.origins.len(),
        skipped: &report.skipped,
        mean_lpl_diff: &report.mean_lpl_diff,
        mean_crps_ratio: &report.mean_crps_ratio,
        joint_lpl_diff: &report.joint_lpl_diff,
        final_cumulative_lpl: report.cumulative_lpl.last().copied().unwrap_or(0.0),
        floored_scores: report
            .origins
            .iter()
            .map(|o| o.model.floored + o.baseline.floored)
            .sum(),
    };
    let path = dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serialises"))
        .map_err(|e| Error::io(&path, e))
}
