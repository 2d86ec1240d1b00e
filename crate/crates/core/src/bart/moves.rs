use rand::Rng;
use serde::{Deserialize, Serialize};

use super::prior::ChangeMove;
use super::tree::{Covariates, SplitRule, TreeNode};

const P_GROW: f64 = 0.4;
const P_PRUNE: f64 = 0.4;
const P_CHANGE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
}

impl MoveKind {
    pub const ALL: [MoveKind; 3] = [MoveKind::Grow, MoveKind::Prune, MoveKind::Change];

    pub fn index(self) -> usize {
        match self {
            MoveKind::Grow => 0,
            MoveKind::Prune => 1,
            MoveKind::Change => 2,
        }
    }
}

/// A proposed tree together with `log q(old | new) - log q(new | old)`.
///
/// The proposal densities include the split-rule draw, so the ratio must be
/// combined with [`log_tree_prior`](super::log_tree_prior), which also
/// carries the rule probabilities.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub kind: MoveKind,
    pub tree: TreeNode,
    pub log_proposal_ratio: f64,
}

/// Move probabilities for `tree`, renormalised over the feasible moves.
fn move_probs(tree: &TreeNode) -> [f64; 3] {
    if tree.is_leaf() {
        [1.0, 0.0, 0.0]
    } else {
        [P_GROW, P_PRUNE, P_CHANGE]
    }
}

fn draw_rule<R: Rng + ?Sized>(cov: &Covariates, var: Option<usize>, rng: &mut R) -> SplitRule {
    let var = var.unwrap_or_else(|| cov.splittable_var(rng.random_range(0..cov.splittable_vars())));
    let grid = cov.grid(var);
    SplitRule {
        var,
        cut: grid[rng.random_range(0..grid.len())],
    }
}

/// Draws one GROW / PRUNE / CHANGE proposal (0.4 / 0.4 / 0.2, restricted to
/// the moves feasible for `tree`).
pub fn propose_move<R: Rng + ?Sized>(
    tree: &TreeNode,
    cov: &Covariates,
    change: ChangeMove,
    rng: &mut R,
) -> Proposal {
    let probs = move_probs(tree);
    let u: f64 = rng.random();
    let kind = if u < probs[0] {
        MoveKind::Grow
    } else if u < probs[0] + probs[1] {
        MoveKind::Prune
    } else {
        MoveKind::Change
    };
    propose_move_of_kind(tree, cov, kind, change, rng).expect("selected move is feasible")
}

/// Proposal of a specific kind, or `None` when that move is infeasible.
pub fn propose_move_of_kind<R: Rng + ?Sized>(
    tree: &TreeNode,
    cov: &Covariates,
    kind: MoveKind,
    change: ChangeMove,
    rng: &mut R,
) -> Option<Proposal> {
    let k = cov.splittable_vars();
    if k == 0 {
        return None;
    }
    let probs_old = move_probs(tree);
    match kind {
        MoveKind::Grow => {
            let leaves = tree.paths_where(&TreeNode::is_leaf);
            let path = &leaves[rng.random_range(0..leaves.len())];
            let rule = draw_rule(cov, None, rng);
            let mut new = tree.clone();
            *new.node_mut(path) = TreeNode::split(rule, TreeNode::leaf(0.0), TreeNode::leaf(0.0));
            let probs_new = move_probs(&new);
            let log_q_fwd = probs_old[0].ln()
                - (leaves.len() as f64).ln()
                - (k as f64).ln()
                - (cov.grid(rule.var).len() as f64).ln();
            let log_q_rev = probs_new[1].ln() - (new.nog_count() as f64).ln();
            Some(Proposal {
                kind,
                tree: new,
                log_proposal_ratio: log_q_rev - log_q_fwd,
            })
        }
        MoveKind::Prune => {
            let nogs = tree.paths_where(&|n: &TreeNode| match n {
                TreeNode::Internal { left, right, .. } => left.is_leaf() && right.is_leaf(),
                TreeNode::Leaf { .. } => false,
            });
            if nogs.is_empty() {
                return None;
            }
            let path = &nogs[rng.random_range(0..nogs.len())];
            let removed = match tree.node(path) {
                TreeNode::Internal { rule, .. } => *rule,
                TreeNode::Leaf { .. } => unreachable!(),
            };
            let mut new = tree.clone();
            *new.node_mut(path) = TreeNode::leaf(0.0);
            let probs_new = move_probs(&new);
            let log_q_fwd = probs_old[1].ln() - (nogs.len() as f64).ln();
            let log_q_rev = probs_new[0].ln()
                - (new.leaf_count() as f64).ln()
                - (k as f64).ln()
                - (cov.grid(removed.var).len() as f64).ln();
            Some(Proposal {
                kind,
                tree: new,
                log_proposal_ratio: log_q_rev - log_q_fwd,
            })
        }
        MoveKind::Change => {
            let internals = tree.paths_where(&|n: &TreeNode| !n.is_leaf());
            if internals.is_empty() {
                return None;
            }
            let path = &internals[rng.random_range(0..internals.len())];
            let mut new = tree.clone();
            let node = new.node_mut(path);
            let TreeNode::Internal { rule, .. } = node else {
                unreachable!()
            };
            let old_rule = *rule;
            let new_rule = match change {
                ChangeMove::VarAndCut => draw_rule(cov, None, rng),
                ChangeMove::CutOnly => draw_rule(cov, Some(old_rule.var), rng),
            };
            *rule = new_rule;
            // Forward picks new_rule with prob 1/(k n_new), reverse picks the
            // old one with 1/(k n_old); the node choice cancels.
            let log_ratio = (cov.grid(new_rule.var).len() as f64).ln()
                - (cov.grid(old_rule.var).len() as f64).ln();
            Some(Proposal {
                kind,
                tree: new,
                log_proposal_ratio: log_ratio,
            })
        }
    }
}
