use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use fbvar::bart::MoveKind;
use fbvar::data::{assemble_dataset, read_series_csv, read_transform_map, write_dataset_snapshot, Dataset};
use fbvar::dgp::{run_replications, write_replications};
use fbvar::forecast::{predictive_simulate, recursive_evaluation, write_evaluation, write_forecast_csv, ScorePanel};
use fbvar::gibbs::{run_chain_with, write_chain, write_draw_store, Block, RunOptions, SamplerData};
use fbvar::rng::derive_seed;
use fbvar::structural::{
    factor_sensitivity, girf, observable_sensitivity, percent_grid, write_irf_csv, write_sensitivity_csv, ShockSpec,
    SignSpec,
};
use serde::Serialize;

use crate::config::{self, DataSpec, EstimateConfig, EvaluateConfig, ForecastConfig, IrfConfig, PdpConfig, SimulateConfig};
use crate::manifest::{dataset_fingerprint, file_sha256, Estimate, Manifest, CHAIN_FILE, DATASET_FILE};

/// Settings shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Global {
    pub out: Option<PathBuf>,
    pub timing: bool,
    pub quiet: bool,
}

impl Global {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// A parsed config plus the directory its relative paths hang off.
struct Loaded<T> {
    cfg: T,
    base: PathBuf,
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Loaded<T>> {
    let cfg = config::load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { cfg, base })
}

impl<T> Loaded<T> {
    fn path(&self, p: &Path) -> PathBuf {
        config::resolve(&self.base, p)
    }

    fn out_dir(&self, g: &Global, from_config: &Path) -> Result<PathBuf> {
        let dir = match &g.out {
            Some(o) => o.clone(),
            None => self.path(from_config),
        };
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }
}

fn read_dataset(spec: &DataSpec, base: &Path) -> Result<Dataset> {
    let csv = config::resolve(base, &spec.csv);
    let tr = config::resolve(base, &spec.transforms);
    let codes = read_transform_map(&tr).context("reading transform codes")?;
    let series = read_series_csv(&csv, &codes).context("reading data")?;
    assemble_dataset(&series, spec.p, spec.standardize).with_context(|| format!("assembling {}", csv.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(PathBuf::from(name))
}

fn open_estimate(dir: &Path, data: Option<&DataSpec>, base: &Path) -> Result<Estimate> {
    let est = Estimate::open(dir).with_context(|| format!("opening estimate directory {}", dir.display()))?;
    if let Some(spec) = data {
        let fresh = read_dataset(spec, base)?;
        est.check_data(&fresh)?;
    }
    Ok(est)
}

pub fn simulate(path: &Path, g: &Global) -> Result<()> {
    let l: Loaded<SimulateConfig> = load(path)?;
    let cfg = &l.cfg;
    cfg.dgp.validate().with_context(|| format!("invalid config {}", path.display()))?;
    let dir = l.out_dir(g, &cfg.out_dir)?;
    let t0 = Instant::now();
    let draws = run_replications(&cfg.dgp)?;
    write_replications(&dir, &cfg.dgp, &draws)?;
    let mut files: Vec<PathBuf> = (0..draws.len()).map(|i| PathBuf::from(format!("rep_{i:03}.csv"))).collect();
    files.push("transforms.json".into());
    files.push("truth.json".into());
    Manifest::new("simulate", cfg, cfg.dgp.seed)?.write(&dir, &files)?;
    g.note(format!("wrote {} replications to {}", draws.len(), dir.display()));
    if g.timing {
        eprintln!("simulate: {:.3} s", t0.elapsed().as_secs_f64());
    }
    Ok(())
}

#[derive(Serialize)]
struct FactorDiagnostics {
    factor: usize,
    grow: f64,
    prune: f64,
    change: f64,
    overall: f64,
    proposed: [u64; 3],
    accepted: [u64; 3],
}

#[derive(Serialize)]
struct Diagnostics {
    iterations: usize,
    saved_draws: usize,
    rejected_sweeps: usize,
    max_cache_drift: f64,
    tree_acceptance: Vec<FactorDiagnostics>,
    tau_a_final: Option<f64>,
    tau_f_final: Option<f64>,
}

#[derive(Serialize)]
struct Timing {
    total_seconds: f64,
    blocks: Vec<(String, f64)>,
}

pub struct EstimateFlags {
    pub resume: bool,
    pub stop_after: Option<usize>,
}

pub fn estimate(path: &Path, g: &Global, flags: &EstimateFlags) -> Result<()> {
    let l: Loaded<EstimateConfig> = load(path)?;
    let cfg = &l.cfg;
    let ds = read_dataset(&cfg.data, &l.base)?;
    let mut sampler = cfg.sampler.clone();
    let sign: Option<SignSpec> = match &cfg.sign_spec {
        None => None,
        Some(input) => {
            let spec = input.resolve()?;
            if sampler.lambda_q_constraints.is_some() {
                bail!("invalid configuration `sign_spec`: give either sign_spec or sampler.lambda_q_constraints, not both");
            }
            if sampler.q_q != spec.shocks.len() {
                bail!(
                    "invalid configuration `sampler.q_q`: the sign spec names {} shocks but q_q is {}",
                    spec.shocks.len(),
                    sampler.q_q
                );
            }
            sampler.lambda_q_constraints = Some(spec.constraints_for(&ds)?);
            Some(spec)
        }
    };
    sampler.validate(ds.m()).with_context(|| format!("invalid config {}", path.display()))?;
    let dir = l.out_dir(g, &cfg.out_dir)?;
    let data = SamplerData::from_dataset(&ds)?;

    let ck_path = dir.join("checkpoint.bin");
    let use_ck = cfg.checkpoint_every > 0 || flags.resume || flags.stop_after.is_some();
    let opts = RunOptions {
        checkpoint_path: use_ck.then(|| ck_path.clone()),
        checkpoint_every: cfg.checkpoint_every,
        resume: flags.resume,
        stop_after: flags.stop_after,
    };
    if flags.resume && !ck_path.exists() {
        g.note(format!("no checkpoint at {}; starting a fresh chain", ck_path.display()));
    }
    g.note(format!(
        "estimating M = {}, T = {}, Q_f = {}, Q_q = {}, {} sweeps",
        ds.m(),
        ds.t_len(),
        sampler.q_f,
        sampler.q_q,
        sampler.total_iterations()
    ));
    let t0 = Instant::now();
    let out = run_chain_with(&data, &sampler, &opts)?;
    let total = t0.elapsed().as_secs_f64();
    if out.iterations < sampler.total_iterations() {
        g.note(format!(
            "stopped after {} of {} sweeps; checkpoint at {}, rerun with --resume to finish",
            out.iterations,
            sampler.total_iterations(),
            ck_path.display()
        ));
        return Ok(());
    }

    write_chain(&dir.join(CHAIN_FILE), &out)?;
    write_draw_store(&dir.join("draws"), &out)?;
    let mut files = vec![PathBuf::from(CHAIN_FILE)];
    let mut draw_files: Vec<PathBuf> = std::fs::read_dir(dir.join("draws"))?
        .filter_map(|e| e.ok())
        .map(|e| PathBuf::from("draws").join(e.file_name()))
        .collect();
    draw_files.sort();
    files.extend(draw_files);
    files.push(write_json(&dir, DATASET_FILE, &ds)?);
    write_dataset_snapshot(&dir.join("dataset.csv"), &ds)?;
    files.push("dataset.csv".into());
    if let Some(spec) = &sign {
        files.push(write_json(&dir, "sign_spec.json", spec)?);
    }
    let diag = Diagnostics {
        iterations: out.iterations,
        saved_draws: out.draws.len(),
        rejected_sweeps: out.rejected_sweeps,
        max_cache_drift: out.max_cache_drift,
        tree_acceptance: out
            .move_stats
            .iter()
            .enumerate()
            .map(|(j, m)| FactorDiagnostics {
                factor: j + 1,
                grow: m.acceptance_rate(MoveKind::Grow),
                prune: m.acceptance_rate(MoveKind::Prune),
                change: m.acceptance_rate(MoveKind::Change),
                overall: m.overall_rate(),
                proposed: m.proposed,
                accepted: m.accepted,
            })
            .collect(),
        tau_a_final: out.tau_a_trace.last().copied(),
        tau_f_final: out.tau_f_trace.last().copied(),
    };
    files.push(write_json(&dir, "diagnostics.json", &diag)?);
    if g.timing {
        // Wall-clock numbers differ run to run, so they stay out of the manifest.
        let t = Timing {
            total_seconds: total,
            blocks: Block::ALL
                .iter()
                .zip(out.block_seconds)
                .map(|(b, s)| (b.name().to_string(), s))
                .collect(),
        };
        write_json(&dir, "timing.json", &t)?;
    }
    let mut m = Manifest::new("estimate", cfg, cfg.sampler.seed)?;
    m.dataset_sha256 = Some(dataset_fingerprint(&ds));
    m.chain_sha256 = Some(file_sha256(&dir.join(CHAIN_FILE))?);
    m.write(&dir, &files)?;
    if out.rejected_sweeps > 0 {
        g.note(format!("warning: {} sweeps were rejected as degenerate", out.rejected_sweeps));
    }
    g.note(format!("wrote {} draws to {} in {:.1} s", out.draws.len(), dir.display(), total));
    Ok(())
}

fn estimate_fingerprints(m: &mut Manifest, est: &Estimate) {
    m.dataset_sha256 = est.manifest.dataset_sha256.clone();
    m.chain_sha256 = est.manifest.chain_sha256.clone();
}

pub fn forecast(path: &Path, g: &Global) -> Result<()> {
    let l: Loaded<ForecastConfig> = load(path)?;
    let cfg = &l.cfg;
    if cfg.horizon == 0 {
        bail!("invalid configuration `horizon`: must be at least 1");
    }
    if cfg.n_per_draw == 0 {
        bail!("invalid configuration `n_per_draw`: must be at least 1");
    }
    let est = open_estimate(&l.path(&cfg.estimate_dir), cfg.data.as_ref(), &l.base)?;
    let ds = &est.dataset;
    let origin = cfg.origin.unwrap_or(ds.t_len());
    if origin > ds.t_len() {
        bail!("invalid configuration `origin`: {origin} is past the end of the {} sample rows", ds.t_len());
    }
    let dir = l.out_dir(g, &cfg.out_dir)?;
    let t0 = Instant::now();
    let fc = predictive_simulate(&est.chain, ds, origin, cfg.horizon, cfg.n_per_draw, cfg.seed)?;
    write_forecast_csv(&dir.join("forecast.csv"), &fc, &ds.names)?;
    let mut files = vec![PathBuf::from("forecast.csv")];
    if origin + cfg.horizon <= ds.t_len() {
        let realized = ds.transformed_full.rows(origin + ds.p, cfg.horizon).into_owned();
        let panel = ScorePanel::score_with(&fc, &realized, cfg.density)?;
        let mut rows = Vec::new();
        for h in 1..=cfg.horizon {
            for (i, name) in ds.names.iter().enumerate() {
                rows.push(ScoreRow {
                    variable: name.clone(),
                    horizon: h,
                    lpl: panel.lpl[(i, h - 1)],
                    crps: panel.crps[(i, h - 1)],
                });
            }
            rows.push(ScoreRow {
                variable: "joint".into(),
                horizon: h,
                lpl: panel.joint_lpl[h - 1],
                crps: f64::NAN,
            });
        }
        write_scores(&dir.join("scores.csv"), &rows)?;
        files.push("scores.csv".into());
    } else {
        g.note("origin plus horizon runs past the sample; no realized values to score");
    }
    let mut m = Manifest::new("forecast", cfg, cfg.seed)?;
    estimate_fingerprints(&mut m, &est);
    m.write(&dir, &files)?;
    g.note(format!("wrote forecast to {}", dir.display()));
    if g.timing {
        eprintln!("forecast: {:.3} s", t0.elapsed().as_secs_f64());
    }
    Ok(())
}

struct ScoreRow {
    variable: String,
    horizon: usize,
    lpl: f64,
    crps: f64,
}

fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut text = String::from("variable,horizon,lpl,crps\n");
    for r in rows {
        let crps = if r.crps.is_nan() { String::new() } else { r.crps.to_string() };
        text.push_str(&format!("{},{},{},{}\n", r.variable, r.horizon, r.lpl, crps));
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn evaluate(path: &Path, g: &Global) -> Result<()> {
    let l: Loaded<EvaluateConfig> = load(path)?;
    let cfg = &l.cfg;
    let ds = read_dataset(&cfg.data, &l.base)?;
    cfg.evaluation.validate(&ds).with_context(|| format!("invalid config {}", path.display()))?;
    let dir = l.out_dir(g, &cfg.out_dir)?;
    let t0 = Instant::now();
    let report = recursive_evaluation(&ds, &cfg.evaluation)?;
    write_evaluation(&dir, &report)?;
    for (o, e) in &report.skipped {
        g.note(format!("warning: origin {o} skipped: {e}"));
    }
    let mut m = Manifest::new("evaluate", cfg, cfg.evaluation.seed)?;
    m.dataset_sha256 = Some(dataset_fingerprint(&ds));
    let files: Vec<PathBuf> = ["scores.csv", "cumulative_lpl.csv", "summary.json"].iter().map(PathBuf::from).collect();
    m.write(&dir, &files)?;
    g.note(format!(
        "scored {} origins; h = 1 mean LPL difference {:.4}",
        report.origins.len(),
        report.mean_lpl_diff[0]
    ));
    if g.timing {
        eprintln!("evaluate: {:.3} s", t0.elapsed().as_secs_f64());
    }
    Ok(())
}

fn shock_names(est: &Estimate) -> Vec<String> {
    let q = est.chain.dims.q_q;
    let path = est.dir.join("sign_spec.json");
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(spec) = serde_json::from_str::<SignSpec>(&text) {
            if spec.shocks.len() == q {
                return spec.shocks;
            }
        }
    }
    (1..=q).map(|j| format!("shock{j}")).collect()
}

pub fn irf(path: &Path, g: &Global) -> Result<()> {
    let l: Loaded<IrfConfig> = load(path)?;
    let cfg = &l.cfg;
    let est = open_estimate(&l.path(&cfg.estimate_dir), cfg.data.as_ref(), &l.base)?;
    let q = est.chain.dims.q_q;
    if q == 0 {
        bail!("the chain in {} has no static factors to shock", est.dir.display());
    }
    let shocks = cfg.shocks.clone().unwrap_or_else(|| (0..q).collect());
    if let Some(j) = shocks.iter().find(|j| **j >= q) {
        bail!("invalid configuration `shocks`: index {j} but the chain has {q} static factors");
    }
    let names = shock_names(&est);
    let mut specs = Vec::with_capacity(shocks.len());
    for &j in &shocks {
        let spec = ShockSpec {
            shock_index: j,
            size_sd: cfg.size_sd,
            sign: 1,
            horizon: cfg.horizon,
            n_histories: cfg.n_histories,
            n_paths: cfg.n_paths,
            antithetic: cfg.antithetic,
            history_rows: cfg.history_rows.clone(),
        };
        spec.validate().with_context(|| format!("invalid config {}", path.display()))?;
        specs.push(spec);
    }
    let dir = l.out_dir(g, &cfg.out_dir)?;
    let t0 = Instant::now();
    let mut blocks = Vec::with_capacity(specs.len());
    for spec in &specs {
        // Both arms share a seed, so their shocks differ only in the impulse.
        let seed = derive_seed(cfg.seed, &[spec.shock_index as u64]);
        let pos = girf(&est.chain, &est.dataset, spec, seed)?;
        let neg = girf(&est.chain, &est.dataset, &spec.with_sign(-1), seed)?;
        blocks.push((names[spec.shock_index].clone(), pos, neg));
    }
    write_irf_csv(&dir.join("irf.csv"), &est.dataset.names, &blocks)?;
    let mut files = vec![PathBuf::from("irf.csv")];
    if cfg.write_draws {
        let p = dir.join("irf_draws.csv");
        let mut text = String::from("shock,sign,draw,variable,horizon,value\n");
        for (name, pos, neg) in &blocks {
            for (sign, r) in [(1, pos), (-1, neg)] {
                for (d, mat) in r.draws.iter().enumerate() {
                    for (i, var) in est.dataset.names.iter().enumerate() {
                        for h in 0..mat.nrows() {
                            text.push_str(&format!("{name},{sign},{d},{var},{h},{}\n", mat[(h, i)]));
                        }
                    }
                }
            }
        }
        std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        files.push("irf_draws.csv".into());
    }
    let mut m = Manifest::new("irf", cfg, cfg.seed)?;
    estimate_fingerprints(&mut m, &est);
    m.write(&dir, &files)?;
    g.note(format!("wrote {} shock blocks to {}", blocks.len(), dir.display()));
    if g.timing {
        eprintln!("irf: {:.3} s", t0.elapsed().as_secs_f64());
    }
    Ok(())
}

pub fn pdp(path: &Path, g: &Global) -> Result<()> {
    let l: Loaded<PdpConfig> = load(path)?;
    let cfg = &l.cfg;
    let est = open_estimate(&l.path(&cfg.estimate_dir), cfg.data.as_ref(), &l.base)?;
    let ds = &est.dataset;
    let covariates: Vec<(String, usize)> = match &cfg.covariates {
        None => ds.names.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect(),
        Some(list) => list
            .iter()
            .map(|n| match ds.names.iter().position(|d| d == n) {
                Some(i) => Ok((n.clone(), i)),
                None => bail!("invalid configuration `covariates`: `{n}` is not a dataset series"),
            })
            .collect::<Result<_>>()?,
    };
    let grid = cfg.grid.clone().unwrap_or_else(percent_grid);
    let dir = l.out_dir(g, &cfg.out_dir)?;
    let t0 = Instant::now();
    let mut factors = Vec::new();
    let mut observables = Vec::new();
    for (name, i) in &covariates {
        factors.push((name.clone(), factor_sensitivity(&est.chain, ds, *i, &grid)?));
        observables.push((name.clone(), observable_sensitivity(&est.chain, ds, *i, &grid)?));
    }
    write_sensitivity_csv(&dir.join("factor_sensitivity.csv"), "factor", &factors)?;
    write_sensitivity_csv(&dir.join("variable_sensitivity.csv"), "variable", &observables)?;
    let files = vec![PathBuf::from("factor_sensitivity.csv"), PathBuf::from("variable_sensitivity.csv")];
    let mut m = Manifest::new("pdp", cfg, 0)?;
    estimate_fingerprints(&mut m, &est);
    m.write(&dir, &files)?;
    g.note(format!("wrote sensitivity curves for {} covariates to {}", covariates.len(), dir.display()));
    if g.timing {
        eprintln!("pdp: {:.3} s", t0.elapsed().as_secs_f64());
    }
    Ok(())
}
