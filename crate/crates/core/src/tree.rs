//! Sampled tree structures and the posterior ensemble they accumulate into.
//!
//! Nodes live in a flat array linked by indices so a draw is cheap to copy
//! per MCMC iteration and serializes linearly. Arrays are kept in preorder
//! with the left child preceding the right, which makes the dump format
//! unambiguous without storing child links.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub split_var: Option<usize>,
    pub split_value: Option<f64>,
    pub mu: Option<f64>,
    pub depth: usize,
}

impl TreeNode {
    pub fn is_internal(&self) -> bool {
        self.left.is_some()
    }

    pub fn is_terminal(&self) -> bool {
        self.left.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
    Swap,
}

impl MoveKind {
    pub const ALL: [MoveKind; 4] = [MoveKind::Grow, MoveKind::Prune, MoveKind::Change, MoveKind::Swap];

    pub fn as_str(&self) -> &'static str {
        match self {
            MoveKind::Grow => "grow",
            MoveKind::Prune => "prune",
            MoveKind::Change => "change",
            MoveKind::Swap => "swap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Proposal {
    pub kind: MoveKind,
    pub accepted: bool,
}

/// Canonical encoding of a tree's topology plus split variables.
///
/// Split values and leaf parameters are deliberately excluded: two trees
/// share a key exactly when they have the same shape and the same split
/// variable at every corresponding internal node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TreeTypeKey(pub String);

impl std::fmt::Display for TreeTypeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// One sampled tree.
#[derive(Debug)]
pub struct TreeDraw {
    /// nodes[0] is the root; arrays are preorder with left before right.
    pub nodes: Vec<TreeNode>,
    pub tree_index: usize,
    pub iteration: usize,
    pub proposal: Proposal,
    node_counts: OnceLock<Vec<usize>>,
}

impl Clone for TreeDraw {
    fn clone(&self) -> Self {
        TreeDraw {
            nodes: self.nodes.clone(),
            tree_index: self.tree_index,
            iteration: self.iteration,
            proposal: self.proposal,
            node_counts: OnceLock::new(),
        }
    }
}

impl TreeDraw {
    pub fn new(nodes: Vec<TreeNode>, tree_index: usize, iteration: usize, proposal: Proposal) -> Self {
        TreeDraw {
            nodes,
            tree_index,
            iteration,
            proposal,
            node_counts: OnceLock::new(),
        }
    }

    /// A single terminal node with the given leaf value.
    pub fn stump(mu: f64, tree_index: usize, iteration: usize, proposal: Proposal) -> Self {
        let root = TreeNode {
            id: 0,
            parent: None,
            left: None,
            right: None,
            split_var: None,
            split_value: None,
            mu: Some(mu),
            depth: 0,
        };
        TreeDraw::new(vec![root], tree_index, iteration, proposal)
    }

    pub fn is_stump(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn terminal_ids(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.is_terminal()).map(|n| n.id).collect()
    }

    pub fn internal_ids(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.is_internal()).map(|n| n.id).collect()
    }

    /// Checks node-array consistency: ids match positions, exactly one root,
    /// internal/terminal field patterns, child/parent back-links, and depths.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Structure("tree has no nodes".into()));
        }
        if self.nodes[0].parent.is_some() {
            return Err(Error::Structure("nodes[0] must be the root".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::Structure(format!("node at position {i} has id {}", node.id)));
            }
            let internal = node.left.is_some()
                && node.right.is_some()
                && node.split_var.is_some()
                && node.split_value.is_some()
                && node.mu.is_none();
            let terminal = node.left.is_none()
                && node.right.is_none()
                && node.split_var.is_none()
                && node.split_value.is_none();
            if !internal && !terminal {
                return Err(Error::Structure(format!("node {i} is neither internal nor terminal")));
            }
            if let (Some(l), Some(r)) = (node.left, node.right) {
                for child in [l, r] {
                    let c = self
                        .nodes
                        .get(child)
                        .ok_or_else(|| Error::Structure(format!("node {i} links to missing child {child}")))?;
                    if c.parent != Some(i) {
                        return Err(Error::Structure(format!("child {child} does not point back to {i}")));
                    }
                    if c.depth != node.depth + 1 {
                        return Err(Error::Structure(format!("child {child} has inconsistent depth")));
                    }
                }
            }
            if let Some(p) = node.parent {
                let parent = self
                    .nodes
                    .get(p)
                    .ok_or_else(|| Error::Structure(format!("node {i} has missing parent {p}")))?;
                if parent.left != Some(i) && parent.right != Some(i) {
                    return Err(Error::Structure(format!("parent {p} does not link to child {i}")));
                }
            } else if i != 0 {
                return Err(Error::Structure(format!("non-root node {i} lacks a parent")));
            }
        }
        if self.nodes[0].depth != 0 {
            return Err(Error::Structure("root depth must be 0".into()));
        }
        let terminals = self.nodes.iter().filter(|n| n.is_terminal()).count();
        let internals = self.nodes.len() - terminals;
        if terminals != internals + 1 {
            return Err(Error::Structure(format!(
                "{terminals} terminals for {internals} internal nodes"
            )));
        }
        Ok(())
    }

    /// Routes every observation down the tree.
    ///
    /// Returns one row-index list per node: the root receives all rows and
    /// each internal node's rows split by `x[splitVar] <= splitValue` (left)
    /// versus `>` (right).
    pub fn route_observations(&self, data: &Dataset) -> Result<Vec<Vec<usize>>> {
        let rows = route_nodes(&self.nodes, data)?;
        self.node_counts
            .get_or_init(|| rows.iter().map(|r| r.len()).collect());
        Ok(rows)
    }

    /// Per-node observation counts, routed and cached on first use.
    pub fn node_counts(&self, data: &Dataset) -> Result<&[usize]> {
        if self.node_counts.get().is_none() {
            self.route_observations(data)?;
        }
        Ok(self.node_counts.get().expect("counts cached by routing"))
    }

    /// Terminal node id an arbitrary feature vector falls into.
    pub fn leaf_for(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            let node = &self.nodes[id];
            match (node.left, node.right, node.split_var, node.split_value) {
                (Some(l), Some(r), Some(v), Some(c)) => {
                    id = if x[v] <= c { l } else { r };
                }
                _ => return id,
            }
        }
    }

    /// Sum-of-tree contribution for a feature vector (leaf mu, 0 if unset).
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_for(x)].mu.unwrap_or(0.0)
    }

    /// Preorder serialization of topology and split variables:
    /// `"S"` for a stump, `"T"` for terminals, `"V<var>(L,R)"` for internals.
    pub fn canonical_key(&self) -> TreeTypeKey {
        if self.is_stump() {
            return TreeTypeKey("S".to_string());
        }
        let mut out = String::new();
        self.write_key(0, &mut out);
        TreeTypeKey(out)
    }

    fn write_key(&self, id: usize, out: &mut String) {
        let node = &self.nodes[id];
        match (node.left, node.right, node.split_var) {
            (Some(l), Some(r), Some(v)) => {
                out.push('V');
                out.push_str(&v.to_string());
                out.push('(');
                self.write_key(l, out);
                out.push(',');
                self.write_key(r, out);
                out.push(')');
            }
            _ => out.push('T'),
        }
    }
}

/// Routes observations through a bare node array (preorder, parents first).
pub(crate) fn route_nodes(nodes: &[TreeNode], data: &Dataset) -> Result<Vec<Vec<usize>>> {
    for node in nodes {
        if let Some(v) = node.split_var {
            if v >= data.p() {
                return Err(Error::Structure(format!(
                    "node {} splits on column {v} but the data has {} columns",
                    node.id,
                    data.p()
                )));
            }
        }
    }
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    rows[0] = (0..data.n()).collect();
    for i in 0..nodes.len() {
        let node = &nodes[i];
        if let (Some(l), Some(r), Some(v), Some(c)) =
            (node.left, node.right, node.split_var, node.split_value)
        {
            let col = data.column(v);
            let (mut lrows, mut rrows) = (Vec::new(), Vec::new());
            for &row in &rows[i] {
                if col[row] <= c {
                    lrows.push(row);
                } else {
                    rrows.push(row);
                }
            }
            rows[l] = lrows;
            rows[r] = rrows;
        }
    }
    Ok(rows)
}

/// Maximum node depth (0 for a stump).
pub fn depth_of(tree: &TreeDraw) -> usize {
    tree.depth()
}

/// Total node count, internal plus terminal.
pub fn node_count(tree: &TreeDraw) -> usize {
    tree.node_count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Task {
    Regression,
    BinaryClassification,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::BinaryClassification => "binaryClassification",
        }
    }
}

/// The m tree draws of one MCMC iteration.
#[derive(Debug, Clone)]
pub struct IterationDraw {
    pub trees: Vec<TreeDraw>,
    /// Residual standard deviation draw on the original response scale;
    /// fixed at 1 for classification.
    pub sigma: f64,
    pub accepted_count: usize,
    /// Standard deviation of the latent residuals (classification only);
    /// stands in for sigma when picking the target iteration.
    pub latent_resid_sd: Option<f64>,
}

impl IterationDraw {
    pub fn new(trees: Vec<TreeDraw>, sigma: f64, latent_resid_sd: Option<f64>) -> Self {
        let accepted_count = trees.iter().filter(|t| t.proposal.accepted).count();
        IterationDraw {
            trees,
            sigma,
            accepted_count,
            latent_resid_sd,
        }
    }
}

/// Schema of the dataset a fit was produced from, enough to validate that a
/// dataset supplied later for routing-dependent analyses matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub n: usize,
    pub p: usize,
    pub column_names: Vec<String>,
}

impl DatasetSchema {
    pub fn of(data: &Dataset) -> Self {
        DatasetSchema {
            n: data.n(),
            p: data.p(),
            column_names: data.column_names(),
        }
    }

    pub fn check(&self, data: &Dataset) -> Result<()> {
        if data.n() != self.n || data.p() != self.p {
            return Err(Error::SchemaMismatch(format!(
                "fit expects {} rows x {} columns, data has {} x {}",
                self.n,
                self.p,
                data.n(),
                data.p()
            )));
        }
        if data.column_names() != self.column_names {
            return Err(Error::SchemaMismatch("column names differ from the fit's schema".into()));
        }
        Ok(())
    }
}

/// Full K-iteration record of a fit, including burn-in draws.
#[derive(Debug, Clone)]
pub struct PosteriorEnsemble {
    pub iterations: Vec<IterationDraw>,
    pub burn_in: usize,
    pub m: usize,
    pub task: Task,
    pub schema: DatasetSchema,
    /// Affine map between the sampler's internal response scale and the
    /// original one: original = internal * y_scale + y_center.
    pub y_center: f64,
    pub y_scale: f64,
    /// Per retained iteration, the length-n fitted vector on the original
    /// scale (probabilities for classification).
    pub fitted: Vec<Vec<f64>>,
}

impl PosteriorEnsemble {
    /// Number of retained posterior samples.
    pub fn k(&self) -> usize {
        self.iterations.len() - self.burn_in
    }

    pub fn total_iters(&self) -> usize {
        self.iterations.len()
    }

    /// Retained (post burn-in) iterations.
    pub fn retained(&self) -> &[IterationDraw] {
        &self.iterations[self.burn_in..]
    }

    /// Absolute indices of retained iterations.
    pub fn retained_indices(&self) -> std::ops::Range<usize> {
        self.burn_in..self.iterations.len()
    }

    /// Posterior-mean fitted values on the original scale.
    pub fn fitted_mean(&self) -> Vec<f64> {
        let n = self.schema.n;
        let mut out = vec![0.0; n];
        for draw in &self.fitted {
            for (o, v) in out.iter_mut().zip(draw) {
                *o += v;
            }
        }
        let k = self.fitted.len() as f64;
        out.iter_mut().for_each(|v| *v /= k);
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations.len() {
            return Err(Error::Format(format!(
                "burn-in {} leaves no retained iterations out of {}",
                self.burn_in,
                self.iterations.len()
            )));
        }
        for (k, it) in self.iterations.iter().enumerate() {
            if it.trees.len() != self.m {
                return Err(Error::Format(format!(
                    "iteration {k} has {} trees, expected m = {}",
                    it.trees.len(),
                    self.m
                )));
            }
            for t in &it.trees {
                t.validate()?;
            }
        }
        if self.fitted.len() != self.k() {
            return Err(Error::Format(format!(
                "{} fitted vectors for {} retained iterations",
                self.fitted.len(),
                self.k()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Builds a tree from a nested spec: `Leaf(mu)` or `Split(var, value, left, right)`.
    pub enum Spec {
        Leaf(f64),
        Split(usize, f64, Box<Spec>, Box<Spec>),
    }

    pub fn leaf(mu: f64) -> Spec {
        Spec::Leaf(mu)
    }

    pub fn split(var: usize, value: f64, l: Spec, r: Spec) -> Spec {
        Spec::Split(var, value, Box::new(l), Box::new(r))
    }

    pub fn tree(spec: Spec) -> TreeDraw {
        fn emit(spec: &Spec, parent: Option<usize>, depth: usize, nodes: &mut Vec<TreeNode>) -> usize {
            let id = nodes.len();
            nodes.push(TreeNode {
                id,
                parent,
                left: None,
                right: None,
                split_var: None,
                split_value: None,
                mu: None,
                depth,
            });
            match spec {
                Spec::Leaf(mu) => nodes[id].mu = Some(*mu),
                Spec::Split(var, value, l, r) => {
                    nodes[id].split_var = Some(*var);
                    nodes[id].split_value = Some(*value);
                    let lid = emit(l, Some(id), depth + 1, nodes);
                    nodes[id].left = Some(lid);
                    let rid = emit(r, Some(id), depth + 1, nodes);
                    nodes[id].right = Some(rid);
                }
            }
            id
        }
        let mut nodes = Vec::new();
        emit(&spec, None, 0, &mut nodes);
        let t = TreeDraw::new(nodes, 0, 0, Proposal { kind: MoveKind::Grow, accepted: true });
        t.validate().expect("test tree must be valid");
        t
    }

    pub fn numeric_dataset(cols: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset {
        let metas = (0..cols.len())
            .map(|j| crate::data::ColumnMeta::numeric(format!("x{}", j + 1)))
            .collect();
        Dataset::new(metas, cols, y).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn stump_routes_all_rows_to_root() {
        let data = numeric_dataset(vec![vec![0.1, 0.2, 0.3]], vec![1.0, 2.0, 3.0]);
        let t = tree(leaf(0.0));
        let rows = t.route_observations(&data).unwrap();
        assert_eq!(rows, vec![vec![0, 1, 2]]);
        assert_eq!(t.node_counts(&data).unwrap(), &[3]);
    }

    #[test]
    fn single_split_partitions_rows() {
        let data = numeric_dataset(vec![vec![0.2, 0.7]], vec![0.0, 0.0]);
        let t = tree(split(0, 0.5, leaf(-1.0), leaf(1.0)));
        let rows = t.route_observations(&data).unwrap();
        assert_eq!(rows[1], vec![0]);
        assert_eq!(rows[2], vec![1]);
    }

    #[test]
    fn depth_two_tree_matches_exhaustive_rule_evaluation() {
        // 4 crafted rows on 2 columns.
        let x1 = vec![0.1, 0.4, 0.6, 0.9];
        let x2 = vec![0.8, 0.2, 0.5, 0.1];
        let data = numeric_dataset(vec![x1.clone(), x2.clone()], vec![0.0; 4]);
        let t = tree(split(0, 0.5, split(1, 0.5, leaf(0.0), leaf(0.0)), leaf(0.0)));
        let rows = t.route_observations(&data).unwrap();

        // Oracle: evaluate the rules exhaustively per row.
        let mut expect: Vec<Vec<usize>> = vec![Vec::new(); 5];
        for i in 0..4 {
            expect[0].push(i);
            if x1[i] <= 0.5 {
                expect[1].push(i);
                if x2[i] <= 0.5 {
                    expect[2].push(i);
                } else {
                    expect[3].push(i);
                }
            } else {
                expect[4].push(i);
            }
        }
        assert_eq!(rows, expect);
    }

    #[test]
    fn routing_rejects_out_of_range_split_var() {
        let data = numeric_dataset(vec![vec![0.0, 1.0]], vec![0.0, 0.0]);
        let t = tree(split(3, 0.5, leaf(0.0), leaf(0.0)));
        assert!(matches!(t.route_observations(&data), Err(Error::Structure(_))));
    }

    #[test]
    fn canonical_keys() {
        assert_eq!(tree(leaf(0.0)).canonical_key().0, "S");
        assert_eq!(tree(split(3, 0.2, leaf(0.0), leaf(0.0))).canonical_key().0, "V3(T,T)");
        // Split values do not change the key.
        let a = tree(split(3, 0.2, leaf(0.0), leaf(1.0)));
        let b = tree(split(3, 0.9, leaf(5.0), leaf(-5.0)));
        assert_eq!(a.canonical_key(), b.canonical_key());
        let nested = tree(split(0, 0.5, split(1, 0.5, leaf(0.0), leaf(0.0)), leaf(0.0)));
        assert_eq!(nested.canonical_key().0, "V0(V1(T,T),T)");
    }

    #[test]
    fn depth_and_node_count() {
        let stump = tree(leaf(0.0));
        assert_eq!((depth_of(&stump), node_count(&stump)), (0, 1));
        let one = tree(split(0, 0.5, leaf(0.0), leaf(0.0)));
        assert_eq!((depth_of(&one), node_count(&one)), (1, 3));
        // Three-split left chain: 7 nodes, depth 3.
        let chain = tree(split(
            0,
            0.5,
            split(0, 0.25, split(0, 0.1, leaf(0.0), leaf(0.0)), leaf(0.0)),
            leaf(0.0),
        ));
        assert_eq!((depth_of(&chain), node_count(&chain)), (3, 7));
    }

    #[test]
    fn terminal_count_is_internal_count_plus_one() {
        for t in [
            tree(leaf(0.0)),
            tree(split(0, 0.5, leaf(0.0), leaf(0.0))),
            tree(split(0, 0.5, split(1, 0.2, leaf(0.0), leaf(0.0)), split(1, 0.7, leaf(0.0), leaf(0.0)))),
        ] {
            let terms = t.terminal_ids().len();
            let ints = t.internal_ids().len();
            assert_eq!(terms, ints + 1);
        }
    }
}
