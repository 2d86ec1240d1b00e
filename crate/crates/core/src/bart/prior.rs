use serde::{Deserialize, Serialize};

use super::tree::{Covariates, TreeNode};
use crate::error::{Error, Result};

/// Hyperparameters of the tree and terminal-value priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BartPriorConfig {
    /// Base of the split probability `alpha * (1 + depth)^(-beta)`.
    pub alpha: f64,
    /// Power of the split probability.
    pub beta: f64,
    /// Terminal-value variance hyperparameter.
    pub m_hyper: f64,
    /// Number of trees in each ensemble.
    pub s_count: usize,
}

impl Default for BartPriorConfig {
    fn default() -> Self {
        Self {
            alpha: 0.95,
            beta: 2.0,
            m_hyper: 2.0,
            s_count: 250,
        }
    }
}

impl BartPriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("bart.alpha", "must lie in (0, 1)"));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::config("bart.beta", "must be non-negative"));
        }
        if !(self.m_hyper > 0.0) {
            return Err(Error::config("bart.m_hyper", "must be positive"));
        }
        if self.s_count == 0 {
            return Err(Error::config("bart.s_count", "need at least one tree"));
        }
        Ok(())
    }
}

/// What a CHANGE move redraws at the chosen internal node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeMove {
    #[default]
    VarAndCut,
    CutOnly,
}

/// How ensemble targets are normalised before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseScaling {
    /// Map the current targets' min/max onto [-0.5, 0.5] at every sweep.
    #[default]
    MinMax,
    /// Fit the targets on their own scale.
    Identity,
}

fn default_min_leaf() -> usize {
    1
}

/// Prior hyperparameters plus the sampler knobs of the tree updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BartConfig {
    #[serde(default)]
    pub prior: BartPriorConfig,
    #[serde(default)]
    pub change_move: ChangeMove,
    #[serde(default)]
    pub scaling: ResponseScaling,
    /// Proposals leaving a leaf with fewer observations are rejected.
    #[serde(default = "default_min_leaf")]
    pub min_leaf_obs: usize,
    /// Drop the data term: tree moves then sample from the prior.
    #[serde(default)]
    pub prior_only: bool,
}

impl Default for BartConfig {
    fn default() -> Self {
        Self {
            prior: BartPriorConfig::default(),
            change_move: ChangeMove::default(),
            scaling: ResponseScaling::default(),
            min_leaf_obs: 1,
            prior_only: false,
        }
    }
}

impl BartConfig {
    pub fn with_trees(s_count: usize) -> Self {
        let mut cfg = Self::default();
        cfg.prior.s_count = s_count;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()
    }
}

/// Prior probability that a node at `depth` is split.
pub fn nonterminal_prior_prob(depth: usize, cfg: &BartPriorConfig) -> f64 {
    cfg.alpha * (1.0 + depth as f64).powf(-cfg.beta)
}

/// Prior variance `0.5 / (S sqrt(m))` of each terminal value.
pub fn terminal_prior_variance(cfg: &BartPriorConfig) -> f64 {
    0.5 / (cfg.s_count as f64 * cfg.m_hyper.sqrt())
}

pub fn terminal_prior_sd(cfg: &BartPriorConfig) -> f64 {
    terminal_prior_variance(cfg).sqrt()
}

/// Log prior probability of a tree's structure and split rules.
///
/// Split variables are uniform over the covariates that have candidate
/// values, and split values uniform over that covariate's grid.
pub fn log_tree_prior(tree: &TreeNode, cov: &Covariates, cfg: &BartPriorConfig) -> f64 {
    let mut leaves = Vec::new();
    let mut internals = Vec::new();
    tree.collect_depths(0, &mut leaves, &mut internals);
    let k = cov.splittable_vars() as f64;
    let leaf_part: f64 = leaves
        .iter()
        .map(|&d| (1.0 - nonterminal_prior_prob(d, cfg)).ln())
        .sum();
    let split_part: f64 = internals
        .iter()
        .map(|&(d, rule)| {
            nonterminal_prior_prob(d, cfg).ln() - k.ln() - (cov.grid(rule.var).len() as f64).ln()
        })
        .sum();
    leaf_part + split_part
}
