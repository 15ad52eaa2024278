//! Pruning the maximal tree and choosing the penalty.
//!
//! For every leaf count `K` the path stores the subtree with the largest
//! total log-likelihood among all rooted subtrees with `K` leaves, found by a
//! knapsack recursion over the tree. A penalized criterion
//! `loglik / k_n - λ K` can only select the sizes on the upper concave hull
//! of `K ↦ loglik[K]`; those subtrees are nested and are reached from the
//! maximal tree by weakest-link collapses.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{GptError, Result};
use crate::gpd::loglik_unchecked;
use crate::par;
use crate::tree::{grow, GrowConfig, TreeNode};

#[derive(Debug, Clone, PartialEq)]
pub struct PruningPath {
    /// `subtrees[K - 1]` has `K` leaves.
    pub subtrees: Vec<TreeNode>,
    /// Total log-likelihood of each subtree divided by `k_n`.
    pub logliks: Vec<f64>,
    /// Internal nodes removed by successive weakest-link collapses of nodes
    /// whose children are leaves, from the maximal tree down to the root.
    pub collapse_order: Vec<usize>,
    /// Leaf counts on the upper concave hull, ascending; these are the only
    /// sizes a penalty can select.
    pub hull: Vec<usize>,
    pub k_n: usize,
}

impl PruningPath {
    pub fn max_leaves(&self) -> usize {
        self.subtrees.len()
    }

    pub fn subtree(&self, k: usize) -> Option<&TreeNode> {
        k.checked_sub(1).and_then(|i| self.subtrees.get(i))
    }

    /// Penalties at which the selected size changes, descending: the `j`-th
    /// value separates `hull[j]` from `hull[j + 1]`.
    pub fn critical_values(&self) -> Vec<f64> {
        self.hull.windows(2).map(|w| (self.logliks[w[1] - 1] - self.logliks[w[0] - 1]) / (w[1] - w[0]) as f64).collect()
    }

    /// Leaf count maximizing `loglik[K] - λ K`, smallest on ties.
    pub fn select_size(&self, lambda: f64) -> usize {
        let mut best = 1;
        let mut best_val = self.logliks[0] - lambda;
        for (i, &ll) in self.logliks.iter().enumerate().skip(1) {
            let k = i + 1;
            let v = ll - lambda * k as f64;
            if v > best_val {
                best = k;
                best_val = v;
            }
        }
        best
    }

    /// Penalty grid made of the critical values, their geometric midpoints,
    /// and one value beyond each end.
    pub fn default_lambdas(&self) -> Vec<f64> {
        let crit: Vec<f64> = self.critical_values().into_iter().filter(|c| *c > 0.0 && c.is_finite()).collect();
        if crit.is_empty() {
            return vec![1.0 / self.k_n.max(1) as f64];
        }
        let mut out = Vec::with_capacity(2 * crit.len() + 1);
        out.push(crit[0] * 2.0);
        for (j, &c) in crit.iter().enumerate() {
            out.push(c);
            if let Some(&next) = crit.get(j + 1) {
                out.push((c * next).sqrt());
            }
        }
        out.push(crit[crit.len() - 1] / 2.0);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Flattened view of a tree for the size recursion.
struct Flat {
    id: usize,
    loglik: f64,
    children: Option<(usize, usize)>,
    leaves: usize,
}

fn flatten(t: &TreeNode, out: &mut Vec<Flat>) -> usize {
    let i = out.len();
    out.push(Flat { id: t.id(), loglik: t.fit().loglik, children: None, leaves: 1 });
    if let TreeNode::Internal { left, right, .. } = t {
        let l = flatten(left, out);
        let r = flatten(right, out);
        out[i].children = Some((l, r));
        out[i].leaves = out[l].leaves + out[r].leaves;
    }
    i
}

/// `best[v][k - 1]`: largest log-likelihood of a subtree rooted at `v` with
/// `k` leaves, and the left share of leaves achieving it (0 for a collapse).
fn size_table(nodes: &[Flat]) -> Vec<Vec<(f64, usize)>> {
    let mut best: Vec<Vec<(f64, usize)>> = vec![Vec::new(); nodes.len()];
    for v in (0..nodes.len()).rev() {
        let node = &nodes[v];
        let mut row = vec![(f64::NEG_INFINITY, 0); node.leaves];
        row[0] = (node.loglik, 0);
        if let Some((l, r)) = node.children {
            for a in 1..=nodes[l].leaves {
                for b in 1..=nodes[r].leaves {
                    let val = best[l][a - 1].0 + best[r][b - 1].0;
                    let slot = &mut row[a + b - 1];
                    if val > slot.0 {
                        *slot = (val, a);
                    }
                }
            }
        }
        best[v] = row;
    }
    best
}

fn kept_internal(nodes: &[Flat], best: &[Vec<(f64, usize)>], v: usize, k: usize, keep: &mut Vec<usize>) {
    if k == 1 {
        return;
    }
    let (l, r) = nodes[v].children.expect("k > 1 needs an internal node");
    let a = best[v][k - 1].1;
    keep.push(nodes[v].id);
    kept_internal(nodes, best, l, a, keep);
    kept_internal(nodes, best, r, k - a, keep);
}

/// Upper concave hull of `(K, y[K])`, as ascending leaf counts.
fn upper_hull(y: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::new();
    for k in 1..=y.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let s_ab = (y[b - 1] - y[a - 1]) / (b - a) as f64;
            let s_bk = (y[k - 1] - y[b - 1]) / (k - b) as f64;
            if s_bk >= s_ab {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    // drop sizes that no positive penalty selects over a smaller tree
    while hull.len() >= 2 {
        let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
        if y[b - 1] > y[a - 1] {
            break;
        }
        hull.pop();
    }
    hull
}

/// Weakest-link order: repeatedly take the branch with the smallest
/// log-likelihood gain per removed leaf (deeper branch on ties) and collapse
/// its internal nodes bottom-up, one at a time.
fn weakest_link_order(t: &TreeNode) -> Vec<usize> {
    let mut current = t.clone();
    let mut order = Vec::new();
    loop {
        let mut pick: Option<(f64, usize)> = None;
        branch_gains(&current, &mut |id, g| {
            if pick.is_none_or(|(pg, pid)| g < pg || (g == pg && id > pid)) {
                pick = Some((g, id));
            }
        });
        let Some((_, id)) = pick else { break };
        let branch = current.find(id).expect("picked node is in the tree");
        let mut ids = branch.internal_ids();
        ids.reverse();
        order.extend(ids);
        current = current.collapse(id);
    }
    order
}

/// Calls `f(id, gain per removed leaf)` for every internal node.
fn branch_gains(t: &TreeNode, f: &mut impl FnMut(usize, f64)) {
    if let TreeNode::Internal { id, fit, left, right, .. } = t {
        f(*id, (t.total_loglik() - fit.loglik) / (t.n_leaves() - 1) as f64);
        branch_gains(left, f);
        branch_gains(right, f);
    }
}

/// Best subtree of every size, normalized log-likelihoods and the
/// weakest-link collapse order.
pub fn prune_path(t: &TreeNode, k_n: usize) -> Result<PruningPath> {
    if k_n == 0 {
        return Err(GptError::Domain("k_n must be at least 1".into()));
    }
    let mut nodes = Vec::with_capacity(t.n_nodes());
    flatten(t, &mut nodes);
    let best = size_table(&nodes);
    let k_max = nodes[0].leaves;
    let scale = k_n as f64;
    let mut subtrees = Vec::with_capacity(k_max);
    let mut logliks = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut keep = Vec::with_capacity(k);
        kept_internal(&nodes, &best, 0, k, &mut keep);
        keep.sort_unstable();
        let sub = t.restrict(&|id| keep.binary_search(&id).is_ok());
        logliks.push(sub.total_loglik() / scale);
        subtrees.push(sub);
    }
    let hull = upper_hull(&logliks);
    Ok(PruningPath { subtrees, logliks, collapse_order: weakest_link_order(t), hull, k_n })
}

/// The subtree maximizing `loglik[K] - λ K`, smallest `K` on ties.
pub fn select_subtree(path: &PruningPath, lambda: f64) -> Result<&TreeNode> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(GptError::Domain(format!("penalty must be a finite nonnegative number, got {lambda}")));
    }
    Ok(&path.subtrees[path.select_size(lambda) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Selection {
    /// Hold out a random `fraction` of the excesses.
    TestSample { fraction: f64, seed: u64 },
    /// `k`-fold cross-validation with a seeded random fold assignment.
    KFold { k: usize, seed: u64 },
}

impl Selection {
    pub fn describe(&self) -> String {
        match self {
            Selection::TestSample { fraction, seed } => format!("test_sample(fraction={fraction};seed={seed})"),
            Selection::KFold { k, seed } => format!("kfold(k={k};seed={seed})"),
        }
    }
}

impl Default for Selection {
    fn default() -> Self {
        Selection::KFold { k: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyGrid {
    /// Candidate penalties, ascending. Empty means the default grid built
    /// from the pruning path of the full data.
    pub lambdas: Vec<f64>,
    pub selection: Selection,
}

impl PenaltyGrid {
    pub fn new(lambdas: Vec<f64>, selection: Selection) -> Result<Self> {
        let g = PenaltyGrid { lambdas, selection };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(GptError::InvalidConfig("penalties must be positive and finite".into()));
        }
        if self.lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GptError::InvalidConfig("penalties must be strictly ascending".into()));
        }
        match self.selection {
            Selection::KFold { k, .. } if k < 2 => Err(GptError::InvalidConfig("k-fold selection needs k >= 2".into())),
            Selection::TestSample { fraction, .. } if !(fraction > 0.0 && fraction < 1.0) => {
                Err(GptError::InvalidConfig("test fraction must lie in (0, 1)".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Outcome of penalty selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selected {
    pub lambda: f64,
    /// Full-data tree pruned at `lambda`.
    pub tree: TreeNode,
    /// Pruning path of the full-data maximal tree.
    pub path: PruningPath,
    pub lambdas: Vec<f64>,
    /// Held-out log-likelihood per penalty, divided by the number of held-out
    /// excesses. Empty when the grid has a single penalty.
    pub scores: Vec<f64>,
}

/// Held-out log-likelihood of `rows` under the leaf parameters of `tree`.
fn held_out_loglik(tree: &TreeNode, d: &Dataset, rows: &[usize]) -> Result<f64> {
    let mut terms = Vec::with_capacity(rows.len());
    for &i in rows {
        let p = tree.route(&d.row(i))?.fit.params;
        terms.push(loglik_unchecked(d.response[i], p.sigma, p.gamma));
    }
    Ok(par::compensated_sum(terms))
}

/// Held-out rows of each fold.
fn folds(n: usize, selection: &Selection) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    match *selection {
        Selection::KFold { k, seed } => {
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut out = vec![Vec::new(); k];
            for (j, i) in idx.into_iter().enumerate() {
                out[j % k].push(i);
            }
            out.iter_mut().for_each(|f| f.sort_unstable());
            out
        }
        Selection::TestSample { fraction, seed } => {
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let m = ((n as f64) * fraction).round() as usize;
            let mut test = idx[..m].to_vec();
            test.sort_unstable();
            vec![test]
        }
    }
}

/// Grows and prunes on `d` (a table of excesses) and picks the penalty by
/// held-out log-likelihood. Ties go to the larger penalty.
pub fn select_lambda(d: &Dataset, cfg: &GrowConfig, grid: &PenaltyGrid) -> Result<Selected> {
    grid.validate()?;
    let n = d.n_rows();
    let full = grow(d, cfg)?;
    let path = prune_path(&full, n)?;
    let lambdas = if grid.lambdas.is_empty() { path.default_lambdas() } else { grid.lambdas.clone() };
    if lambdas.len() == 1 {
        let tree = select_subtree(&path, lambdas[0])?.clone();
        return Ok(Selected { lambda: lambdas[0], tree, path, lambdas, scores: Vec::new() });
    }

    let test_sets = folds(n, &grid.selection);
    for t in &test_sets {
        if t.is_empty() || t.len() == n {
            return Err(GptError::InsufficientData(format!(
                "{n} excesses cannot be split for {}",
                grid.selection.describe()
            )));
        }
    }
    let per_fold = par::map_slice(&test_sets, |test| -> Result<Vec<f64>> {
        let mut in_test = vec![false; n];
        test.iter().for_each(|&i| in_test[i] = true);
        let train_rows: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
        let train = d.select(&train_rows);
        let tree = grow(&train, cfg)?;
        let fold_path = prune_path(&tree, train.n_rows())?;
        lambdas.iter().map(|&l| held_out_loglik(select_subtree(&fold_path, l)?, d, test)).collect()
    });
    let mut totals = vec![Vec::with_capacity(test_sets.len()); lambdas.len()];
    for f in per_fold {
        for (j, s) in f?.into_iter().enumerate() {
            totals[j].push(s);
        }
    }
    let n_test: usize = test_sets.iter().map(Vec::len).sum();
    let scores: Vec<f64> = totals.into_iter().map(|t| par::compensated_sum(t) / n_test as f64).collect();

    let mut best = 0;
    for j in 1..lambdas.len() {
        if scores[j] >= scores[best] {
            best = j;
        }
    }
    let lambda = lambdas[best];
    let tree = select_subtree(&path, lambda)?.clone();
    Ok(Selected { lambda, tree, path, lambdas, scores })
}
