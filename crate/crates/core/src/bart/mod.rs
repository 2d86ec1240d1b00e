//! Sum-of-trees regression used for the conditional means of the nonlinear
//! factors.
//!
//! Trees split on `x[var] <= cut` (left) versus `x[var] > cut` (right). Split
//! values come from a per-covariate grid, by default the unique observed
//! values. Tree structures are updated with grow/prune/change
//! Metropolis-Hastings moves using the marginal likelihood with the leaf
//! values integrated out, after which leaf values are drawn from their
//! conjugate Gaussian posteriors.

mod ensemble;
mod moves;
mod prior;
mod snapshot;
mod tree;

pub use ensemble::{backfit_sweep, MoveStats, ResponseMap, TreeEnsemble};
pub use moves::{propose_move, propose_move_of_kind, MoveKind, Proposal};
pub use prior::{
    log_tree_prior, nonterminal_prior_prob, terminal_prior_sd, terminal_prior_variance,
    BartConfig, BartPriorConfig, ChangeMove, ResponseScaling,
};
pub use snapshot::{EnsembleSnapshot, FlatNode, FlatTree, SNAPSHOT_VERSION};
pub use tree::{
    marginal_tree_loglik, sample_terminal_params, Covariates, LeafStats, SplitRule, TreeNode,
};
