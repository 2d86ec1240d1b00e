use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::std_normal;

/// Covariate matrix in row-major order together with the split-value grid
/// of every covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    n_obs: usize,
    n_vars: usize,
    data: Vec<f64>,
    grid: Vec<Vec<f64>>,
}

impl Covariates {
    /// Uses the sorted unique observed values of each column as its grid.
    pub fn from_matrix(x: &DMatrix<f64>) -> Self {
        let n_vars = x.ncols();
        let grid = (0..n_vars)
            .map(|j| {
                let mut vals: Vec<f64> = x.column(j).iter().copied().collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                vals
            })
            .collect();
        Self::with_grid(x, grid)
    }

    /// Uses a caller-supplied grid (each inner vector is sorted and deduped).
    pub fn with_grid(x: &DMatrix<f64>, mut grid: Vec<Vec<f64>>) -> Self {
        let (n_obs, n_vars) = x.shape();
        assert_eq!(grid.len(), n_vars, "one grid per covariate");
        for g in &mut grid {
            g.sort_by(f64::total_cmp);
            g.dedup();
        }
        let mut data = Vec::with_capacity(n_obs * n_vars);
        for t in 0..n_obs {
            data.extend(x.row(t).iter().copied());
        }
        Self {
            n_obs,
            n_vars,
            data,
            grid,
        }
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_vars..(t + 1) * self.n_vars]
    }

    pub fn grid(&self, var: usize) -> &[f64] {
        &self.grid[var]
    }

    /// Covariates that have at least one candidate split value.
    pub fn splittable_vars(&self) -> usize {
        self.grid.iter().filter(|g| !g.is_empty()).count()
    }

    pub(crate) fn splittable_var(&self, nth: usize) -> usize {
        self.grid
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.is_empty())
            .nth(nth)
            .map(|(i, _)| i)
            .expect("index below splittable_vars()")
    }
}

/// Decision rule `x[var] <= cut` sends an observation to the left child.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub var: usize,
    pub cut: f64,
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        x[self.var] <= self.cut
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        mu: f64,
    },
    Internal {
        rule: SplitRule,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

/// Sufficient statistics of the observations falling in one leaf.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LeafStats {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Default for TreeNode {
    fn default() -> Self {
        TreeNode::Leaf { mu: 0.0 }
    }
}

impl TreeNode {
    pub fn leaf(mu: f64) -> Self {
        TreeNode::Leaf { mu }
    }

    pub fn split(rule: SplitRule, left: TreeNode, right: TreeNode) -> Self {
        TreeNode::Internal {
            rule,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn internal_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => {
                1 + left.internal_count() + right.internal_count()
            }
        }
    }

    /// Depth of the deepest leaf; a lone root has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Internal nodes whose children are both leaves.
    pub fn nog_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => {
                if left.is_leaf() && right.is_leaf() {
                    1
                } else {
                    left.nog_count() + right.nog_count()
                }
            }
        }
    }

    /// Value of the leaf whose region contains `x`.
    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { mu } => return *mu,
                TreeNode::Internal { rule, left, right } => {
                    node = if rule.goes_left(x) { left } else { right };
                }
            }
        }
    }

    /// Left-to-right index of the leaf whose region contains `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut node = self;
        let mut offset = 0;
        loop {
            match node {
                TreeNode::Leaf { .. } => return offset,
                TreeNode::Internal { rule, left, right } => {
                    if rule.goes_left(x) {
                        node = left;
                    } else {
                        offset += left.leaf_count();
                        node = right;
                    }
                }
            }
        }
    }

    /// Leaf values in left-to-right order.
    pub fn leaf_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |mu| out.push(*mu));
        out
    }

    fn visit_leaves(&self, f: &mut impl FnMut(&f64)) {
        match self {
            TreeNode::Leaf { mu } => f(mu),
            TreeNode::Internal { left, right, .. } => {
                left.visit_leaves(f);
                right.visit_leaves(f);
            }
        }
    }

    pub(crate) fn for_each_leaf_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        match self {
            TreeNode::Leaf { mu } => f(mu),
            TreeNode::Internal { left, right, .. } => {
                left.for_each_leaf_mut(f);
                right.for_each_leaf_mut(f);
            }
        }
    }

    /// Depths of all leaves and of all internal nodes, with their rules.
    pub(crate) fn collect_depths(&self, depth: usize, leaves: &mut Vec<usize>, internals: &mut Vec<(usize, SplitRule)>) {
        match self {
            TreeNode::Leaf { .. } => leaves.push(depth),
            TreeNode::Internal { rule, left, right } => {
                internals.push((depth, *rule));
                left.collect_depths(depth + 1, leaves, internals);
                right.collect_depths(depth + 1, leaves, internals);
            }
        }
    }

    /// Splits `rows` across the leaves; `out[i]` receives the rows of leaf `i`.
    pub fn partition(&self, cov: &Covariates, rows: Vec<u32>, out: &mut Vec<Vec<u32>>) {
        match self {
            TreeNode::Leaf { .. } => out.push(rows),
            TreeNode::Internal { rule, left, right } => {
                let (l, r): (Vec<u32>, Vec<u32>) = rows
                    .into_iter()
                    .partition(|&t| rule.goes_left(cov.row(t as usize)));
                left.partition(cov, l, out);
                right.partition(cov, r, out);
            }
        }
    }

    pub fn partition_all(&self, cov: &Covariates) -> Vec<Vec<u32>> {
        let mut out = Vec::with_capacity(self.leaf_count());
        self.partition(cov, (0..cov.n_obs() as u32).collect(), &mut out);
        out
    }

    pub fn leaf_stats(&self, cov: &Covariates, resid: &[f64]) -> Vec<LeafStats> {
        stats_of(&self.partition_all(cov), resid)
    }

    /// Node reached by following `path` (false = left) from the root.
    pub(crate) fn node_mut(&mut self, path: &[bool]) -> &mut TreeNode {
        let mut node = self;
        for &right in path {
            node = match node {
                TreeNode::Internal { left, right: r, .. } => {
                    if right {
                        r
                    } else {
                        left
                    }
                }
                TreeNode::Leaf { .. } => panic!("path runs past a leaf"),
            };
        }
        node
    }

    pub(crate) fn node(&self, path: &[bool]) -> &TreeNode {
        let mut node = self;
        for &right in path {
            node = match node {
                TreeNode::Internal { left, right: r, .. } => {
                    if right {
                        r
                    } else {
                        left
                    }
                }
                TreeNode::Leaf { .. } => panic!("path runs past a leaf"),
            };
        }
        node
    }

    /// Paths to nodes selected by `keep`, in pre-order.
    pub(crate) fn paths_where(&self, keep: &impl Fn(&TreeNode) -> bool) -> Vec<Vec<bool>> {
        let mut out = Vec::new();
        let mut stack = vec![(self, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            if keep(node) {
                out.push(path.clone());
            }
            if let TreeNode::Internal { left, right, .. } = node {
                let mut rp = path.clone();
                rp.push(true);
                stack.push((right, rp));
                let mut lp = path;
                lp.push(false);
                stack.push((left, lp));
            }
        }
        out
    }
}

pub(crate) fn stats_of(parts: &[Vec<u32>], resid: &[f64]) -> Vec<LeafStats> {
    parts
        .iter()
        .map(|rows| {
            let mut s = LeafStats {
                n: rows.len(),
                ..LeafStats::default()
            };
            for &t in rows {
                let r = resid[t as usize];
                s.sum += r;
                s.sum_sq += r * r;
            }
            s
        })
        .collect()
}

/// Log marginal likelihood of one leaf with `mu ~ N(0, prior_var)` integrated out.
pub(crate) fn leaf_log_marginal(s: &LeafStats, resid_var: f64, prior_var: f64) -> f64 {
    let n = s.n as f64;
    let denom = resid_var + n * prior_var;
    -0.5 * n * (2.0 * std::f64::consts::PI * resid_var).ln() + 0.5 * (resid_var / denom).ln()
        - 0.5 * s.sum_sq / resid_var
        + 0.5 * prior_var * s.sum * s.sum / (resid_var * denom)
}

/// Log marginal likelihood of the partial residuals under `tree`, with each
/// terminal value integrated out against its `N(0, prior_var)` prior.
///
/// Empty leaves are a contract violation unless `allow_empty` is set, in
/// which case they contribute nothing.
pub fn marginal_tree_loglik(
    tree: &TreeNode,
    cov: &Covariates,
    partial_residuals: &[f64],
    resid_var: f64,
    prior_var: f64,
    allow_empty: bool,
) -> Result<f64> {
    let stats = tree.leaf_stats(cov, partial_residuals);
    sum_leaf_loglik(&stats, resid_var, prior_var, allow_empty)
}

pub(crate) fn sum_leaf_loglik(
    stats: &[LeafStats],
    resid_var: f64,
    prior_var: f64,
    allow_empty: bool,
) -> Result<f64> {
    let mut total = 0.0;
    for s in stats {
        if s.n == 0 && !allow_empty {
            return Err(Error::contract("marginal likelihood of a tree with an empty leaf"));
        }
        total += leaf_log_marginal(s, resid_var, prior_var);
    }
    Ok(total)
}

/// Posterior mean and variance of a leaf value.
pub(crate) fn leaf_posterior(s: &LeafStats, resid_var: f64, prior_var: f64) -> (f64, f64) {
    let precision = s.n as f64 / resid_var + 1.0 / prior_var;
    let var = 1.0 / precision;
    (var * s.sum / resid_var, var)
}

/// Redraws every terminal value from its conjugate Gaussian posterior.
pub fn sample_terminal_params<R: Rng + ?Sized>(
    tree: &mut TreeNode,
    cov: &Covariates,
    partial_residuals: &[f64],
    resid_var: f64,
    prior_var: f64,
    rng: &mut R,
) {
    let stats = tree.leaf_stats(cov, partial_residuals);
    draw_leaves(tree, &stats, resid_var, prior_var, rng);
}

pub(crate) fn draw_leaves<R: Rng + ?Sized>(
    tree: &mut TreeNode,
    stats: &[LeafStats],
    resid_var: f64,
    prior_var: f64,
    rng: &mut R,
) {
    let mut i = 0;
    tree.for_each_leaf_mut(&mut |mu| {
        let (mean, var) = leaf_posterior(&stats[i], resid_var, prior_var);
        *mu = mean + var.sqrt() * std_normal(rng);
        i += 1;
    });
}
