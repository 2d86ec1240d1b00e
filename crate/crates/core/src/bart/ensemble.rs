use rand::Rng;
use serde::{Deserialize, Serialize};

use super::moves::{propose_move, MoveKind};
use super::prior::{
    log_tree_prior, nonterminal_prior_prob, terminal_prior_variance, BartConfig, ResponseScaling,
};
use super::snapshot::EnsembleSnapshot;
use super::tree::{draw_leaves, stats_of, sum_leaf_loglik, Covariates, SplitRule, TreeNode};
use crate::error::{check_dim, Error, Result};
use crate::rng::std_normal;

/// Affine map between target units and the units the trees are fit in:
/// `original = center + scale * scaled`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseMap {
    pub center: f64,
    pub scale: f64,
}

impl ResponseMap {
    pub const IDENTITY: ResponseMap = ResponseMap {
        center: 0.0,
        scale: 1.0,
    };

    /// Map sending `min..=max` of `targets` onto `[-0.5, 0.5]`.
    pub fn min_max(targets: &[f64]) -> Self {
        let (lo, hi) = targets
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        if !(range > 0.0 && range.is_finite()) {
            return ResponseMap {
                center: if lo.is_finite() { lo } else { 0.0 },
                scale: 1.0,
            };
        }
        ResponseMap {
            center: 0.5 * (hi + lo),
            scale: range,
        }
    }

    #[inline]
    pub fn to_scaled(&self, v: f64) -> f64 {
        (v - self.center) / self.scale
    }

    #[inline]
    pub fn to_original(&self, z: f64) -> f64 {
        self.center + self.scale * z
    }
}

/// Proposal and acceptance counts per move type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: [u64; 3],
    pub accepted: [u64; 3],
    /// Largest gap seen between the incrementally maintained fit cache and a
    /// from-scratch recomputation.
    pub cache_drift: f64,
}

impl MoveStats {
    pub fn merge(&mut self, other: &MoveStats) {
        for i in 0..3 {
            self.proposed[i] += other.proposed[i];
            self.accepted[i] += other.accepted[i];
        }
        self.cache_drift = self.cache_drift.max(other.cache_drift);
    }

    pub fn acceptance_rate(&self, kind: MoveKind) -> f64 {
        let i = kind.index();
        if self.proposed[i] == 0 {
            0.0
        } else {
            self.accepted[i] as f64 / self.proposed[i] as f64
        }
    }

    pub fn overall_rate(&self) -> f64 {
        let p: u64 = self.proposed.iter().sum();
        let a: u64 = self.accepted.iter().sum();
        if p == 0 {
            0.0
        } else {
            a as f64 / p as f64
        }
    }
}

/// `S` regression trees whose sum approximates one conditional-mean function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    trees: Vec<TreeNode>,
    map: ResponseMap,
    /// Current ensemble fit per observation, in scaled units.
    fit_cache: Vec<f64>,
}

impl TreeEnsemble {
    /// `s_count` single-leaf trees at zero.
    pub fn new(s_count: usize, n_obs: usize) -> Self {
        Self {
            trees: vec![TreeNode::leaf(0.0); s_count],
            map: ResponseMap::IDENTITY,
            fit_cache: vec![0.0; n_obs],
        }
    }

    pub fn from_parts(trees: Vec<TreeNode>, map: ResponseMap, cov: &Covariates) -> Self {
        let mut ens = Self {
            trees,
            map,
            fit_cache: Vec::new(),
        };
        ens.fit_cache = ens.recompute_fit(cov);
        ens
    }

    /// Trees and leaf values drawn from the prior. Trees leaving a leaf with
    /// fewer than `cfg.min_leaf_obs` observations are redrawn, so the result
    /// follows the same truncated prior the sampler targets.
    pub fn sample_prior<R: Rng + ?Sized>(cfg: &BartConfig, cov: &Covariates, rng: &mut R) -> Self {
        let v0 = terminal_prior_variance(&cfg.prior);
        let sd = v0.sqrt();
        let trees = (0..cfg.prior.s_count)
            .map(|_| loop {
                let mut tree = grow_from_prior(0, cfg, cov, rng);
                let ok = cfg.min_leaf_obs == 0
                    || tree
                        .partition_all(cov)
                        .iter()
                        .all(|rows| rows.len() >= cfg.min_leaf_obs);
                if ok {
                    tree.for_each_leaf_mut(&mut |mu| *mu = sd * std_normal(rng));
                    break tree;
                }
            })
            .collect();
        Self::from_parts(trees, ResponseMap::IDENTITY, cov)
    }

    pub fn s_count(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    pub fn map(&self) -> ResponseMap {
        self.map
    }

    pub fn fit_cache(&self) -> &[f64] {
        &self.fit_cache
    }

    /// Ensemble prediction at `x`, in target units.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let z: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        self.map.to_original(z)
    }

    /// In-sample fit for observation `t`, in target units.
    pub fn fitted(&self, t: usize) -> f64 {
        self.map.to_original(self.fit_cache[t])
    }

    pub fn fitted_values(&self) -> Vec<f64> {
        self.fit_cache.iter().map(|&z| self.map.to_original(z)).collect()
    }

    /// Sum of tree fits per observation, computed from scratch (scaled units).
    pub fn recompute_fit(&self, cov: &Covariates) -> Vec<f64> {
        (0..cov.n_obs())
            .map(|t| {
                let x = cov.row(t);
                self.trees.iter().map(|tree| tree.predict(x)).sum()
            })
            .collect()
    }

    pub fn snapshot(&self) -> EnsembleSnapshot {
        EnsembleSnapshot::from_ensemble(self)
    }

    /// Re-expresses leaf values under `new` so predictions are unchanged.
    fn remap(&mut self, new: ResponseMap) {
        if new == self.map {
            return;
        }
        let ratio = self.map.scale / new.scale;
        let shift = (self.map.center - new.center) / (new.scale * self.trees.len() as f64);
        for tree in &mut self.trees {
            tree.for_each_leaf_mut(&mut |mu| *mu = *mu * ratio + shift);
        }
        for z in &mut self.fit_cache {
            *z = self.map.to_original(*z);
            *z = new.to_scaled(*z);
        }
        self.map = new;
    }
}

fn grow_from_prior<R: Rng + ?Sized>(
    depth: usize,
    cfg: &BartConfig,
    cov: &Covariates,
    rng: &mut R,
) -> TreeNode {
    let k = cov.splittable_vars();
    if k == 0 || rng.random::<f64>() >= nonterminal_prior_prob(depth, &cfg.prior) {
        return TreeNode::leaf(0.0);
    }
    let var = cov.splittable_var(rng.random_range(0..k));
    let grid = cov.grid(var);
    let rule = SplitRule {
        var,
        cut: grid[rng.random_range(0..grid.len())],
    };
    let left = grow_from_prior(depth + 1, cfg, cov, rng);
    let right = grow_from_prior(depth + 1, cfg, cov, rng);
    TreeNode::split(rule, left, right)
}

/// One backfitting pass over every tree of `ens`.
///
/// `targets` are the current values of the function being fit and
/// `resid_var` the variance of the targets around it, both in target units.
/// Each tree receives one Metropolis-Hastings structure move against the
/// partial residuals of the other trees, then fresh leaf values.
pub fn backfit_sweep<R: Rng + ?Sized>(
    ens: &mut TreeEnsemble,
    targets: &[f64],
    cov: &Covariates,
    resid_var: f64,
    cfg: &BartConfig,
    rng: &mut R,
) -> Result<MoveStats> {
    let n = cov.n_obs();
    check_dim("backfit targets", n, targets.len())?;
    check_dim("backfit fit cache", n, ens.fit_cache.len())?;
    if !(resid_var > 0.0 && resid_var.is_finite()) {
        return Err(Error::contract(format!("backfit residual variance {resid_var}")));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite backfit target".into()));
    }

    let map = match cfg.scaling {
        ResponseScaling::MinMax => ResponseMap::min_max(targets),
        ResponseScaling::Identity => ResponseMap::IDENTITY,
    };
    ens.remap(map);
    let z: Vec<f64> = targets.iter().map(|&v| map.to_scaled(v)).collect();
    let sigma2 = resid_var / (map.scale * map.scale);
    let v0 = terminal_prior_variance(&cfg.prior);
    let prior_sd = v0.sqrt();

    let mut stats = MoveStats::default();
    let mut resid = vec![0.0; n];
    let mut fit = std::mem::take(&mut ens.fit_cache);

    for i in 0..ens.trees.len() {
        let old = &ens.trees[i];
        let parts_old = old.partition_all(cov);
        let old_mu = old.leaf_values();
        for (leaf, rows) in parts_old.iter().enumerate() {
            for &t in rows {
                let t = t as usize;
                resid[t] = z[t] - (fit[t] - old_mu[leaf]);
            }
        }

        // Without any candidate split the structure cannot move.
        let proposal = (cov.splittable_vars() > 0).then(|| propose_move(old, cov, cfg.change_move, rng));
        let mut parts = parts_old;
        if let Some(proposal) = proposal {
            stats.proposed[proposal.kind.index()] += 1;
            let parts_new = proposal.tree.partition_all(cov);
            let admissible =
                cfg.prior_only || parts_new.iter().all(|rows| rows.len() >= cfg.min_leaf_obs);
            let accept = admissible && {
                let log_lik = if cfg.prior_only {
                    0.0
                } else {
                    sum_leaf_loglik(&stats_of(&parts_new, &resid), sigma2, v0, true)?
                        - sum_leaf_loglik(&stats_of(&parts, &resid), sigma2, v0, true)?
                };
                let log_prior = log_tree_prior(&proposal.tree, cov, &cfg.prior)
                    - log_tree_prior(old, cov, &cfg.prior);
                let log_alpha = log_lik + log_prior + proposal.log_proposal_ratio;
                rng.random::<f64>().ln() < log_alpha
            };
            if accept {
                stats.accepted[proposal.kind.index()] += 1;
                ens.trees[i] = proposal.tree;
                parts = parts_new;
            }
        }
        let tree = &mut ens.trees[i];
        if cfg.prior_only {
            tree.for_each_leaf_mut(&mut |mu| *mu = prior_sd * std_normal(rng));
        } else {
            draw_leaves(tree, &stats_of(&parts, &resid), sigma2, v0, rng);
        }
        let new_mu = tree.leaf_values();
        for (leaf, rows) in parts.iter().enumerate() {
            for &t in rows {
                let t = t as usize;
                fit[t] = (z[t] - resid[t]) + new_mu[leaf];
            }
        }
    }

    let fresh = ens.recompute_fit(cov);
    stats.cache_drift = fit
        .iter()
        .zip(&fresh)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ens.fit_cache = fresh;
    Ok(stats)
}
