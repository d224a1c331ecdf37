//! Grow / prune / change / swap proposals with their Metropolis-Hastings
//! proposal-ratio corrections.
//!
//! Move kinds that are impossible for the current tree are resampled among
//! the feasible kinds, i.e. kind probabilities renormalize over the feasible
//! set, and the correction term accounts for that renormalization on both
//! the forward and the reverse transition.

use rand::Rng;

use crate::data::Dataset;
use crate::error::Result;
use crate::tree::{route_nodes, MoveKind, TreeNode};

use super::MoveProbs;

#[derive(Debug)]
pub(crate) struct Proposed {
    pub nodes: Vec<TreeNode>,
    pub kind: MoveKind,
    /// log q(T | T') - log q(T' | T); negative infinity marks a candidate
    /// whose reverse move has zero probability (always rejected).
    pub log_correction: f64,
}

/// Everything the proposal distribution needs to know about one tree.
struct MoveContext {
    rows: Vec<Vec<usize>>,
    /// Terminal nodes with at least one splittable variable.
    growable: Vec<usize>,
    /// Internal nodes whose children are both terminal.
    prunable: Vec<usize>,
    /// Internal nodes with at least one splittable variable in scope.
    changeable: Vec<usize>,
    /// Parent-child pairs of internal nodes.
    swappable: Vec<(usize, usize)>,
}

impl MoveContext {
    fn build(nodes: &[TreeNode], data: &Dataset) -> Result<Self> {
        let rows = route_nodes(nodes, data)?;
        let mut growable = Vec::new();
        let mut prunable = Vec::new();
        let mut changeable = Vec::new();
        let mut swappable = Vec::new();
        for node in nodes {
            if node.is_terminal() {
                if !eligible_vars(data, &rows[node.id]).is_empty() {
                    growable.push(node.id);
                }
            } else {
                let (l, r) = (node.left.unwrap(), node.right.unwrap());
                if nodes[l].is_terminal() && nodes[r].is_terminal() {
                    prunable.push(node.id);
                }
                if !eligible_vars(data, &rows[node.id]).is_empty() {
                    changeable.push(node.id);
                }
                for child in [l, r] {
                    if nodes[child].is_internal() {
                        swappable.push((node.id, child));
                    }
                }
            }
        }
        Ok(MoveContext { rows, growable, prunable, changeable, swappable })
    }

    fn feasible(&self, kind: MoveKind) -> bool {
        match kind {
            MoveKind::Grow => !self.growable.is_empty(),
            MoveKind::Prune => !self.prunable.is_empty(),
            MoveKind::Change => !self.changeable.is_empty(),
            MoveKind::Swap => !self.swappable.is_empty(),
        }
    }

    /// Log probability of picking `kind`, renormalized over feasible kinds.
    fn ln_kind_prob(&self, probs: &MoveProbs, kind: MoveKind) -> f64 {
        if !self.feasible(kind) {
            return f64::NEG_INFINITY;
        }
        let total: f64 = MoveKind::ALL
            .iter()
            .filter(|k| self.feasible(**k))
            .map(|k| probs.get(*k))
            .sum();
        (probs.get(kind) / total).ln()
    }
}

/// Variables with at least two distinct observed values among `rows`.
fn eligible_vars(data: &Dataset, rows: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    'vars: for j in 0..data.p() {
        let col = data.column(j);
        if let Some((&first, rest)) = rows.split_first() {
            let v0 = col[first];
            for &i in rest {
                if col[i] != v0 {
                    out.push(j);
                    continue 'vars;
                }
            }
        }
    }
    out
}

/// Sorted distinct observed values of variable `var` among `rows`.
fn distinct_values(data: &Dataset, rows: &[usize], var: usize) -> Vec<f64> {
    let col = data.column(var);
    let mut vals: Vec<f64> = rows.iter().map(|&i| col[i]).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals.dedup();
    vals
}

/// Rebuilds the node array in preorder starting from node 0, dropping
/// unreachable nodes and recomputing ids, links, and depths.
fn reindex_preorder(nodes: &[TreeNode]) -> Vec<TreeNode> {
    let mut out: Vec<TreeNode> = Vec::with_capacity(nodes.len());
    fn walk(nodes: &[TreeNode], old_id: usize, parent: Option<usize>, depth: usize, out: &mut Vec<TreeNode>) -> usize {
        let new_id = out.len();
        let old = &nodes[old_id];
        out.push(TreeNode {
            id: new_id,
            parent,
            left: None,
            right: None,
            split_var: old.split_var,
            split_value: old.split_value,
            mu: old.mu,
            depth,
        });
        if let (Some(l), Some(r)) = (old.left, old.right) {
            let nl = walk(nodes, l, Some(new_id), depth + 1, out);
            out[new_id].left = Some(nl);
            let nr = walk(nodes, r, Some(new_id), depth + 1, out);
            out[new_id].right = Some(nr);
        }
        new_id
    }
    walk(nodes, 0, None, 0, &mut out);
    out
}

pub(crate) fn propose<R: Rng>(
    nodes: &[TreeNode],
    data: &Dataset,
    probs: &MoveProbs,
    rng: &mut R,
) -> Result<Proposed> {
    let ctx = MoveContext::build(nodes, data)?;
    let feasible: Vec<MoveKind> = MoveKind::ALL.iter().copied().filter(|k| ctx.feasible(*k)).collect();
    debug_assert!(!feasible.is_empty(), "a routable tree always admits some move");
    let total: f64 = feasible.iter().map(|k| probs.get(*k)).sum();
    let mut u = rng.gen::<f64>() * total;
    let mut kind = *feasible.last().unwrap();
    for k in &feasible {
        u -= probs.get(*k);
        if u <= 0.0 {
            kind = *k;
            break;
        }
    }

    match kind {
        MoveKind::Grow => propose_grow(nodes, data, probs, &ctx, rng),
        MoveKind::Prune => propose_prune(nodes, data, probs, &ctx, rng),
        MoveKind::Change => propose_change(nodes, data, probs, &ctx, rng),
        MoveKind::Swap => propose_swap(nodes, data, probs, &ctx, rng),
    }
}

fn propose_grow<R: Rng>(
    nodes: &[TreeNode],
    data: &Dataset,
    probs: &MoveProbs,
    ctx: &MoveContext,
    rng: &mut R,
) -> Result<Proposed> {
    let target = ctx.growable[rng.gen_range(0..ctx.growable.len())];
    let vars = eligible_vars(data, &ctx.rows[target]);
    let var = vars[rng.gen_range(0..vars.len())];
    let cuts = distinct_values(data, &ctx.rows[target], var);
    let cut = cuts[rng.gen_range(0..cuts.len())];

    let mut cand = nodes.to_vec();
    let depth = cand[target].depth;
    let (lid, rid) = (cand.len(), cand.len() + 1);
    cand[target].split_var = Some(var);
    cand[target].split_value = Some(cut);
    cand[target].mu = None;
    cand[target].left = Some(lid);
    cand[target].right = Some(rid);
    for id in [lid, rid] {
        cand.push(TreeNode {
            id,
            parent: Some(target),
            left: None,
            right: None,
            split_var: None,
            split_value: None,
            mu: None,
            depth: depth + 1,
        });
    }
    let cand = reindex_preorder(&cand);
    let cand_ctx = MoveContext::build(&cand, data)?;

    let fwd = ctx.ln_kind_prob(probs, MoveKind::Grow)
        - (ctx.growable.len() as f64).ln()
        - (vars.len() as f64).ln()
        - (cuts.len() as f64).ln();
    let rev = cand_ctx.ln_kind_prob(probs, MoveKind::Prune) - (cand_ctx.prunable.len() as f64).ln();
    Ok(Proposed { nodes: cand, kind: MoveKind::Grow, log_correction: rev - fwd })
}

fn propose_prune<R: Rng>(
    nodes: &[TreeNode],
    data: &Dataset,
    probs: &MoveProbs,
    ctx: &MoveContext,
    rng: &mut R,
) -> Result<Proposed> {
    let target = ctx.prunable[rng.gen_range(0..ctx.prunable.len())];
    let old_var = nodes[target].split_var.expect("prunable node is internal");
    let old_cut = nodes[target].split_value.expect("prunable node is internal");

    let mut cand = nodes.to_vec();
    cand[target].left = None;
    cand[target].right = None;
    cand[target].split_var = None;
    cand[target].split_value = None;
    cand[target].mu = Some(0.0); // placeholder, leaf values are redrawn after accept/reject
    let cand = reindex_preorder(&cand);
    let cand_ctx = MoveContext::build(&cand, data)?;
    // The pruned node keeps preorder position `target`: its removed children
    // sat after it in the array.

    let fwd = ctx.ln_kind_prob(probs, MoveKind::Prune) - (ctx.prunable.len() as f64).ln();
    // Reverse: a grow on the pruned tree must recreate the removed rule.
    let rev_vars = eligible_vars(data, &cand_ctx.rows[target]);
    let rev = if rev_vars.contains(&old_var) {
        let cuts = distinct_values(data, &cand_ctx.rows[target], old_var);
        if cuts.iter().any(|&c| c == old_cut) {
            cand_ctx.ln_kind_prob(probs, MoveKind::Grow)
                - (cand_ctx.growable.len() as f64).ln()
                - (rev_vars.len() as f64).ln()
                - (cuts.len() as f64).ln()
        } else {
            f64::NEG_INFINITY
        }
    } else {
        f64::NEG_INFINITY
    };
    Ok(Proposed { nodes: cand, kind: MoveKind::Prune, log_correction: rev - fwd })
}

fn propose_change<R: Rng>(
    nodes: &[TreeNode],
    data: &Dataset,
    probs: &MoveProbs,
    ctx: &MoveContext,
    rng: &mut R,
) -> Result<Proposed> {
    let target = ctx.changeable[rng.gen_range(0..ctx.changeable.len())];
    let old_var = nodes[target].split_var.expect("changeable node is internal");
    let old_cut = nodes[target].split_value.expect("changeable node is internal");
    let vars = eligible_vars(data, &ctx.rows[target]);
    let var = vars[rng.gen_range(0..vars.len())];
    let cuts = distinct_values(data, &ctx.rows[target], var);
    let cut = cuts[rng.gen_range(0..cuts.len())];

    let mut cand = nodes.to_vec();
    cand[target].split_var = Some(var);
    cand[target].split_value = Some(cut);
    let cand_ctx = MoveContext::build(&cand, data)?;

    let fwd = ctx.ln_kind_prob(probs, MoveKind::Change)
        - (ctx.changeable.len() as f64).ln()
        - (vars.len() as f64).ln()
        - (cuts.len() as f64).ln();
    // Reverse change restores the old rule; the node's own rows are untouched
    // so the old rule is always regenerable, but kind renormalization and the
    // changeable count may differ in descendants.
    let rev_vars = eligible_vars(data, &cand_ctx.rows[target]);
    let rev = if rev_vars.contains(&old_var) {
        let rev_cuts = distinct_values(data, &cand_ctx.rows[target], old_var);
        if rev_cuts.iter().any(|&c| c == old_cut) {
            cand_ctx.ln_kind_prob(probs, MoveKind::Change)
                - (cand_ctx.changeable.len() as f64).ln()
                - (rev_vars.len() as f64).ln()
                - (rev_cuts.len() as f64).ln()
        } else {
            f64::NEG_INFINITY
        }
    } else {
        f64::NEG_INFINITY
    };
    Ok(Proposed { nodes: cand, kind: MoveKind::Change, log_correction: rev - fwd })
}

fn propose_swap<R: Rng>(
    nodes: &[TreeNode],
    data: &Dataset,
    probs: &MoveProbs,
    ctx: &MoveContext,
    rng: &mut R,
) -> Result<Proposed> {
    let (parent, child) = ctx.swappable[rng.gen_range(0..ctx.swappable.len())];
    let mut cand = nodes.to_vec();
    let (pv, pc) = (cand[parent].split_var, cand[parent].split_value);
    cand[parent].split_var = cand[child].split_var;
    cand[parent].split_value = cand[child].split_value;
    cand[child].split_var = pv;
    cand[child].split_value = pc;
    let cand_ctx = MoveContext::build(&cand, data)?;

    let fwd = ctx.ln_kind_prob(probs, MoveKind::Swap) - (ctx.swappable.len() as f64).ln();
    let rev = cand_ctx.ln_kind_prob(probs, MoveKind::Swap) - (cand_ctx.swappable.len() as f64).ln();
    Ok(Proposed { nodes: cand, kind: MoveKind::Swap, log_correction: rev - fwd })
}
