//! Flat, versioned representation of an ensemble for checkpoints and the
//! draw store.
//!
//! JSON layout (version 1):
//!
//! ```json
//! {
//!   "version": 1,
//!   "map": { "center": 0.12, "scale": 1.7 },
//!   "trees": [
//!     { "nodes": [
//!         { "split": { "var": 3, "cut": -0.41, "left": 1, "right": 2 } },
//!         { "leaf": { "mu": 0.013 } },
//!         { "leaf": { "mu": -0.027 } }
//!     ] }
//!   ]
//! }
//! ```
//!
//! Nodes are stored in pre-order; node 0 is the root and child indices point
//! into the same tree's `nodes`. Predictions are `center + scale * sum of
//! reached leaf values`.

use serde::{Deserialize, Serialize};

use super::ensemble::{ResponseMap, TreeEnsemble};
use super::tree::{Covariates, SplitRule, TreeNode};
use crate::error::{Error, Result};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatNode {
    Leaf {
        mu: f64,
    },
    Split {
        var: u32,
        cut: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatTree {
    pub nodes: Vec<FlatNode>,
}

impl FlatTree {
    pub fn from_tree(tree: &TreeNode) -> Self {
        let mut nodes = Vec::new();
        flatten(tree, &mut nodes);
        Self { nodes }
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                FlatNode::Leaf { mu } => return mu,
                FlatNode::Split {
                    var,
                    cut,
                    left,
                    right,
                } => i = if x[var as usize] <= cut { left } else { right } as usize,
            }
        }
    }

    fn to_tree(&self, i: usize) -> Result<TreeNode> {
        match self.nodes.get(i) {
            Some(FlatNode::Leaf { mu }) => Ok(TreeNode::leaf(*mu)),
            Some(FlatNode::Split {
                var,
                cut,
                left,
                right,
            }) => {
                if *left as usize <= i || *right as usize <= i {
                    return Err(Error::Parse {
                        context: "ensemble snapshot".into(),
                        message: format!("node {i} points backwards"),
                    });
                }
                Ok(TreeNode::split(
                    SplitRule {
                        var: *var as usize,
                        cut: *cut,
                    },
                    self.to_tree(*left as usize)?,
                    self.to_tree(*right as usize)?,
                ))
            }
            None => Err(Error::Parse {
                context: "ensemble snapshot".into(),
                message: format!("dangling node index {i}"),
            }),
        }
    }
}

fn flatten(tree: &TreeNode, out: &mut Vec<FlatNode>) -> u32 {
    let idx = out.len() as u32;
    match tree {
        TreeNode::Leaf { mu } => out.push(FlatNode::Leaf { mu: *mu }),
        TreeNode::Internal { rule, left, right } => {
            out.push(FlatNode::Leaf { mu: 0.0 });
            let l = flatten(left, out);
            let r = flatten(right, out);
            out[idx as usize] = FlatNode::Split {
                var: rule.var as u32,
                cut: rule.cut,
                left: l,
                right: r,
            };
        }
    }
    idx
}

/// Immutable copy of an ensemble, sufficient for prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSnapshot {
    pub version: u32,
    pub map: ResponseMap,
    pub trees: Vec<FlatTree>,
}

impl EnsembleSnapshot {
    pub fn from_ensemble(ens: &TreeEnsemble) -> Self {
        Self {
            version: SNAPSHOT_VERSION,
            map: ens.map(),
            trees: ens.trees().iter().map(FlatTree::from_tree).collect(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let z: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        self.map.to_original(z)
    }

    /// Rebuilds a live ensemble, recomputing its fit cache on `cov`.
    pub fn to_ensemble(&self, cov: &Covariates) -> Result<TreeEnsemble> {
        if self.version != SNAPSHOT_VERSION {
            return Err(Error::Parse {
                context: "ensemble snapshot".into(),
                message: format!("unsupported version {}", self.version),
            });
        }
        let trees = self
            .trees
            .iter()
            .map(|t| t.to_tree(0))
            .collect::<Result<Vec<_>>>()?;
        Ok(TreeEnsemble::from_parts(trees, self.map, cov))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: Self = serde_json::from_str(s).map_err(|e| Error::Parse {
            context: "ensemble snapshot".into(),
            message: e.to_string(),
        })?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Parse {
                context: "ensemble snapshot".into(),
                message: format!("unsupported version {}", snap.version),
            });
        }
        Ok(snap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn json_round_trip_preserves_predictions() {
        let x = DMatrix::from_fn(12, 2, |i, j| (i as f64 - 6.0) * (j as f64 + 0.5));
        let cov = Covariates::from_matrix(&x);
        let tree = TreeNode::split(
            SplitRule { var: 1, cut: 0.75 },
            TreeNode::split(SplitRule { var: 0, cut: -2.0 }, TreeNode::leaf(0.1), TreeNode::leaf(-0.3)),
            TreeNode::leaf(1.0 / 3.0),
        );
        let ens = TreeEnsemble::from_parts(
            vec![tree, TreeNode::leaf(0.2)],
            ResponseMap { center: 0.7, scale: 1.3 },
            &cov,
        );
        let snap = ens.snapshot();
        let back = EnsembleSnapshot::from_json(&snap.to_json()).unwrap();
        assert_eq!(back, snap);
        let rebuilt = back.to_ensemble(&cov).unwrap();
        assert_eq!(rebuilt, ens);
        for t in 0..12 {
            assert_eq!(snap.predict(cov.row(t)), ens.predict(cov.row(t)));
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let s = r#"{"version":9,"map":{"center":0.0,"scale":1.0},"trees":[]}"#;
        assert!(EnsembleSnapshot::from_json(s).is_err());
    }
}
