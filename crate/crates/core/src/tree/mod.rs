//! GP regression trees: node types, routing and prediction.

mod grow;

pub use grow::{best_split, evaluate_split, grow, node_fit, BestSplit, GrowConfig, SplitEval};

use serde::{Deserialize, Serialize};

use crate::data::Value;
use crate::error::{GptError, Result};
use crate::gpd::{FitStatus, GpParams};

/// Fitted GP law of the observations reaching a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeFit {
    pub params: GpParams,
    pub n_obs: usize,
    /// Total log-likelihood of the node's excesses at `params`.
    pub loglik: f64,
    pub status: FitStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitKind {
    /// `x <= x_star` goes left.
    NumericThreshold { x_star: f64 },
    /// Levels in `left_levels` go left, those in `right_levels` go right.
    /// Any other level was not seen in the node during training and follows
    /// the child that received more training rows.
    CategorySubset { left_levels: Vec<u32>, right_levels: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub column: usize,
    #[serde(flatten)]
    pub kind: SplitKind,
}

impl SplitRule {
    /// `Some(true)` for left, `Some(false)` for right, `None` when the value
    /// is a category unseen by this node.
    pub fn side(&self, v: Value) -> Result<Option<bool>> {
        match (&self.kind, v) {
            (SplitKind::NumericThreshold { x_star }, Value::Num(x)) => {
                if x.is_nan() {
                    return Err(GptError::Schema(format!("missing value in column {}", self.column)));
                }
                Ok(Some(x <= *x_star))
            }
            (SplitKind::CategorySubset { left_levels, right_levels }, Value::Cat(id)) => {
                if left_levels.contains(&id) {
                    Ok(Some(true))
                } else if right_levels.contains(&id) {
                    Ok(Some(false))
                } else {
                    Ok(None)
                }
            }
            _ => Err(GptError::Schema(format!("column {} has the wrong type", self.column))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        id: usize,
        fit: NodeFit,
    },
    Internal {
        id: usize,
        /// Fit of the node as if it were a leaf; used when pruning.
        fit: NodeFit,
        rule: SplitRule,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

/// Leaf reference returned by [`TreeNode::leaves`] and [`TreeNode::route`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafRef<'a> {
    pub id: usize,
    pub fit: &'a NodeFit,
}

impl TreeNode {
    pub fn id(&self) -> usize {
        match self {
            TreeNode::Leaf { id, .. } | TreeNode::Internal { id, .. } => *id,
        }
    }

    pub fn fit(&self) -> &NodeFit {
        match self {
            TreeNode::Leaf { fit, .. } | TreeNode::Internal { fit, .. } => fit,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => 1 + left.n_nodes() + right.n_nodes(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Leaves from left to right.
    pub fn leaves(&self) -> Vec<LeafRef<'_>> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<LeafRef<'a>>) {
        match self {
            TreeNode::Leaf { id, fit } => out.push(LeafRef { id: *id, fit }),
            TreeNode::Internal { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    /// Sum of leaf log-likelihoods, accumulated left to right.
    pub fn total_loglik(&self) -> f64 {
        self.leaves().iter().fold(0.0, |acc, l| acc + l.fit.loglik)
    }

    /// Ids of the internal nodes, in preorder.
    pub fn internal_ids(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(&mut |n| {
            if !n.is_leaf() {
                out.push(n.id());
            }
        });
        out
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a TreeNode)) {
        f(self);
        if let TreeNode::Internal { left, right, .. } = self {
            left.visit(f);
            right.visit(f);
        }
    }

    pub fn find(&self, node_id: usize) -> Option<&TreeNode> {
        let mut hit = None;
        self.visit(&mut |n| {
            if n.id() == node_id {
                hit = Some(n);
            }
        });
        hit
    }

    /// Copy of the tree with the subtree at `node_id` replaced by a leaf.
    pub fn collapse(&self, node_id: usize) -> TreeNode {
        match self {
            TreeNode::Internal { id, fit, .. } if *id == node_id => TreeNode::Leaf { id: *id, fit: *fit },
            TreeNode::Internal { id, fit, rule, left, right } => TreeNode::Internal {
                id: *id,
                fit: *fit,
                rule: rule.clone(),
                left: Box::new(left.collapse(node_id)),
                right: Box::new(right.collapse(node_id)),
            },
            leaf => leaf.clone(),
        }
    }

    /// Copy keeping only the internal nodes in `keep` (a rooted subtree).
    pub fn restrict(&self, keep: &dyn Fn(usize) -> bool) -> TreeNode {
        match self {
            TreeNode::Internal { id, fit, rule, left, right } if keep(*id) => TreeNode::Internal {
                id: *id,
                fit: *fit,
                rule: rule.clone(),
                left: Box::new(left.restrict(keep)),
                right: Box::new(right.restrict(keep)),
            },
            other => TreeNode::Leaf { id: other.id(), fit: *other.fit() },
        }
    }

    /// The leaf whose region contains `x`.
    pub fn route(&self, x: &[Value]) -> Result<LeafRef<'_>> {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { id, fit } => return Ok(LeafRef { id: *id, fit }),
                TreeNode::Internal { rule, left, right, .. } => {
                    let v = *x.get(rule.column).ok_or_else(|| {
                        GptError::Schema(format!("query has {} covariates, rule needs column {}", x.len(), rule.column))
                    })?;
                    let go_left = match rule.side(v)? {
                        Some(side) => side,
                        None => left.fit().n_obs >= right.fit().n_obs,
                    };
                    node = if go_left { left } else { right };
                }
            }
        }
    }
}

/// Parameters of the leaf containing `x`.
pub fn predict(tree: &TreeNode, x: &[Value]) -> Result<GpParams> {
    Ok(tree.route(x)?.fit.params)
}
