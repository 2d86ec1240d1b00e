use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{initial_state, sweep, SamplerConfig, SamplerData, SweepKey};
use crate::bart::MoveStats;
use crate::error::{Error, Result};
use crate::model::{LoadingConstraint, ModelDims, ModelState, ParameterDraw};

const CHECKPOINT_MAGIC: &[u8; 8] = b"FBVARCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Saved draws plus sampler diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub dims: ModelDims,
    pub draws: Vec<ParameterDraw>,
    /// Tree-move counts per nonlinear factor over every sweep.
    pub move_stats: Vec<MoveStats>,
    /// Global Horseshoe scale of `A` after every sweep.
    pub tau_a_trace: Vec<f64>,
    /// Mean over rows of the `Lambda_f` global scales after every sweep.
    pub tau_f_trace: Vec<f64>,
    /// Sweeps abandoned on a numerically degenerate draw.
    pub rejected_sweeps: usize,
    /// Largest gap between the incremental and recomputed tree fits.
    pub max_cache_drift: f64,
    /// Sweeps completed, burn-in included.
    pub iterations: usize,
    /// Row-major `M x Q_q` restrictions the static loadings were drawn under.
    #[serde(default)]
    pub lambda_q_constraints: Vec<LoadingConstraint>,
    /// Wall-clock seconds per sweep block; not part of the serialised chain.
    #[serde(skip)]
    pub block_seconds: [f64; 8],
}

impl ChainOutput {
    /// An output with no draws yet.
    pub fn new(dims: ModelDims) -> Self {
        Self {
            dims,
            draws: Vec::new(),
            move_stats: vec![MoveStats::default(); dims.q_f],
            tau_a_trace: Vec::new(),
            tau_f_trace: Vec::new(),
            rejected_sweeps: 0,
            max_cache_drift: 0.0,
            iterations: 0,
            lambda_q_constraints: vec![LoadingConstraint::Free; dims.m * dims.q_q],
            block_seconds: [0.0; 8],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Everything needed to continue a chain bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// The sampler configuration as JSON; a resume must match it exactly.
    pub config_json: String,
    pub state: ModelState,
    pub output: ChainOutput,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub checkpoint_path: Option<PathBuf>,
    /// Write a checkpoint every this many sweeps; 0 disables it.
    pub checkpoint_every: usize,
    /// Continue from `checkpoint_path` if it exists.
    pub resume: bool,
    /// Stop after this many sweeps in total (the output is then partial).
    pub stop_after: Option<usize>,
}

fn config_json(cfg: &SamplerConfig) -> String {
    serde_json::to_string(cfg).expect("sampler config serialises")
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let body = bincode::serialize(ck).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let tmp = path.with_extension("tmp");
    let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(CHECKPOINT_MAGIC)
        .and_then(|_| file.write_all(&CHECKPOINT_VERSION.to_le_bytes()))
        .and_then(|_| file.write_all(&body))
        .and_then(|_| file.sync_all())
        .map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    bincode::deserialize(&bytes[12..]).map_err(|e| bad(e.to_string()))
}

/// Runs `cfg.n_burn + cfg.n_save * cfg.thin` sweeps and keeps every
/// `thin`-th draw after burn-in.
pub fn run_chain(data: &SamplerData, cfg: &SamplerConfig) -> Result<ChainOutput> {
    run_chain_with(data, cfg, &RunOptions::default())
}

pub fn run_chain_with(data: &SamplerData, cfg: &SamplerConfig, opts: &RunOptions) -> Result<ChainOutput> {
    let (mut state, mut out) = match (&opts.checkpoint_path, opts.resume) {
        (Some(path), true) if path.exists() => {
            let ck = load_checkpoint(path)?;
            if ck.config_json != config_json(cfg) {
                return Err(Error::config(
                    "resume",
                    format!("{} was written under a different sampler config", path.display()),
                ));
            }
            (ck.state, ck.output)
        }
        _ => {
            let state = initial_state(data, cfg)?;
            let mut out = ChainOutput::new(state.dims);
            out.lambda_q_constraints = state.loadings.lambda_q_constraints.clone();
            (state, out)
        }
    };
    let total = cfg.total_iterations();
    let stop = opts.stop_after.map_or(total, |s| s.min(total));
    for it in out.iterations..stop {
        let key = SweepKey {
            seed: cfg.seed,
            iter: it as u64,
        };
        match sweep(&mut state, data, cfg, key) {
            Ok(stats) => {
                for (acc, m) in out.move_stats.iter_mut().zip(&stats.moves) {
                    acc.merge(m);
                    out.max_cache_drift = out.max_cache_drift.max(m.cache_drift);
                }
                for (acc, s) in out.block_seconds.iter_mut().zip(stats.block_seconds) {
                    *acc += s;
                }
            }
            Err(Error::Degenerate(_)) => out.rejected_sweeps += 1,
            Err(e) => return Err(e),
        }
        out.tau_a_trace.push(state.hs_a.tau);
        let tf = if state.hs_f.is_empty() || state.dims.q_f == 0 {
            0.0
        } else {
            state.hs_f.iter().map(|b| b.tau).sum::<f64>() / state.hs_f.len() as f64
        };
        out.tau_f_trace.push(tf);
        out.iterations = it + 1;
        if it >= cfg.n_burn && (it + 1 - cfg.n_burn) % cfg.thin == 0 {
            out.draws.push(state.to_draw(cfg.store_factor_paths));
        }
        if let Some(path) = &opts.checkpoint_path {
            let due = opts.checkpoint_every > 0 && (it + 1) % opts.checkpoint_every == 0;
            if due || it + 1 == stop {
                save_checkpoint(
                    path,
                    &Checkpoint {
                        config_json: config_json(cfg),
                        state: state.clone(),
                        output: out.clone(),
                    },
                )?;
            }
        }
    }
    Ok(out)
}
