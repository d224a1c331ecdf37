//! Neutral tree-dump file format: line-delimited JSON, one object per tree
//! draw, streamable for large ensembles.
//!
//! Layout: a header object on the first line carries the ensemble metadata
//! (tree count, burn-in, task, response scaling, data schema); each iteration
//! then contributes `m` tree lines (sigma and the latent residual sd ride on
//! the first tree of the iteration) and, once past burn-in, one fitted-values
//! line. Numbers are written in shortest round-trip decimal form, so a
//! read-back ensemble is bit-identical to the written one.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{
    DatasetSchema, IterationDraw, MoveKind, PosteriorEnsemble, Proposal, Task, TreeDraw, TreeNode,
};

const FORMAT_NAME: &str = "bart-tree-dump";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    task: Task,
    m: usize,
    #[serde(rename = "totalIters")]
    total_iters: usize,
    #[serde(rename = "burnIn")]
    burn_in: usize,
    #[serde(rename = "yCenter")]
    y_center: f64,
    #[serde(rename = "yScale")]
    y_scale: f64,
    n: usize,
    p: usize,
    columns: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    parent: Option<usize>,
    var: Option<usize>,
    split: Option<f64>,
    mu: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TreeRecord {
    iter: usize,
    tree: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(rename = "latentSd", skip_serializing_if = "Option::is_none")]
    latent_sd: Option<f64>,
    accepted: bool,
    #[serde(rename = "move")]
    move_kind: MoveKind,
    nodes: Vec<NodeRecord>,
}

#[derive(Serialize, Deserialize)]
struct FittedRecord {
    #[serde(rename = "iterFitted")]
    iter: usize,
    fitted: Vec<f64>,
}

pub fn write_dump(ensemble: &PosteriorEnsemble, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dump_to(ensemble, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_dump_to<W: Write>(ensemble: &PosteriorEnsemble, w: &mut W) -> std::io::Result<()> {
    let header = Header {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        task: ensemble.task,
        m: ensemble.m,
        total_iters: ensemble.total_iters(),
        burn_in: ensemble.burn_in,
        y_center: ensemble.y_center,
        y_scale: ensemble.y_scale,
        n: ensemble.schema.n,
        p: ensemble.schema.p,
        columns: ensemble.schema.column_names.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for (k, it) in ensemble.iterations.iter().enumerate() {
        for (j, t) in it.trees.iter().enumerate() {
            let rec = TreeRecord {
                iter: k,
                tree: j,
                sigma: (j == 0).then_some(it.sigma),
                latent_sd: if j == 0 { it.latent_resid_sd } else { None },
                accepted: t.proposal.accepted,
                move_kind: t.proposal.kind,
                nodes: t
                    .nodes
                    .iter()
                    .map(|n| NodeRecord {
                        id: n.id,
                        parent: n.parent,
                        var: n.split_var,
                        split: n.split_value,
                        mu: n.mu,
                    })
                    .collect(),
            };
            writeln!(w, "{}", serde_json::to_string(&rec).expect("tree record serializes"))?;
        }
        if k >= ensemble.burn_in {
            let rec = FittedRecord {
                iter: k,
                fitted: ensemble.fitted[k - ensemble.burn_in].clone(),
            };
            writeln!(w, "{}", serde_json::to_string(&rec).expect("fitted record serializes"))?;
        }
    }
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<PosteriorEnsemble> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dump_from(file)
}

pub fn read_dump_from<R: Read>(reader: R) -> Result<PosteriorEnsemble> {
    let mut lines = BufReader::new(reader).lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, message: "empty dump file".into() })?;
    let first = first.map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
    let header: Header = serde_json::from_str(&first)
        .map_err(|e| Error::Parse { line: 1, message: format!("bad header: {e}") })?;
    if header.format != FORMAT_NAME {
        return Err(Error::Format(format!("unknown format {:?}", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {}", header.version)));
    }
    if header.m == 0 {
        return Err(Error::Format("header declares m = 0 trees".into()));
    }

    let mut iterations: Vec<IterationDraw> = Vec::with_capacity(header.total_iters);
    let mut fitted: Vec<Vec<f64>> = Vec::new();
    let mut cur_trees: Vec<TreeDraw> = Vec::with_capacity(header.m);
    let mut cur_sigma: Option<f64> = None;
    let mut cur_latent: Option<f64> = None;
    let mut cur_iter: Option<usize> = None;

    let flush_iteration =
        |trees: &mut Vec<TreeDraw>, sigma: &mut Option<f64>, latent: &mut Option<f64>, line: usize| -> Result<IterationDraw> {
            if trees.len() != header.m {
                return Err(Error::Format(format!(
                    "iteration {} has {} tree records, expected m = {} (near line {line})",
                    iterations_len_hint(trees),
                    trees.len(),
                    header.m
                )));
            }
            let sigma = sigma.take().ok_or_else(|| {
                Error::Format(format!("iteration missing sigma on its first tree (near line {line})"))
            })?;
            Ok(IterationDraw::new(std::mem::take(trees), sigma, latent.take()))
        };

    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if value.get("iterFitted").is_some() {
            let rec: FittedRecord = serde_json::from_value(value)
                .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
            if rec.fitted.len() != header.n {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("fitted vector has {} values, expected n = {}", rec.fitted.len(), header.n),
                });
            }
            fitted.push(rec.fitted);
            continue;
        }
        let rec: TreeRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if Some(rec.iter) != cur_iter {
            if cur_iter.is_some() {
                iterations.push(flush_iteration(&mut cur_trees, &mut cur_sigma, &mut cur_latent, line_no)?);
            }
            if rec.iter != iterations.len() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("iteration index {} out of order, expected {}", rec.iter, iterations.len()),
                });
            }
            cur_iter = Some(rec.iter);
        }
        if rec.tree != cur_trees.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("tree index {} out of order, expected {}", rec.tree, cur_trees.len()),
            });
        }
        if let Some(s) = rec.sigma {
            cur_sigma = Some(s);
        }
        if let Some(l) = rec.latent_sd {
            cur_latent = Some(l);
        }
        let nodes = rebuild_nodes(&rec.nodes, line_no)?;
        let draw = TreeDraw::new(
            nodes,
            rec.tree,
            rec.iter,
            Proposal { kind: rec.move_kind, accepted: rec.accepted },
        );
        draw.validate().map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        cur_trees.push(draw);
    }
    if cur_iter.is_some() {
        iterations.push(flush_iteration(&mut cur_trees, &mut cur_sigma, &mut cur_latent, 0)?);
    }

    if iterations.len() != header.total_iters {
        return Err(Error::Format(format!(
            "dump holds {} iterations, header declares {}",
            iterations.len(),
            header.total_iters
        )));
    }
    let ensemble = PosteriorEnsemble {
        iterations,
        burn_in: header.burn_in,
        m: header.m,
        task: header.task,
        schema: DatasetSchema { n: header.n, p: header.p, column_names: header.columns },
        y_center: header.y_center,
        y_scale: header.y_scale,
        fitted,
    };
    ensemble.validate()?;
    Ok(ensemble)
}

fn iterations_len_hint(trees: &[TreeDraw]) -> usize {
    trees.first().map(|t| t.iteration).unwrap_or(0)
}

/// Reconstructs full node records (child links, depths) from the dumped
/// {id, parent, var, split, mu} tuples. Preorder ids make the first child
/// of a parent its left child.
fn rebuild_nodes(records: &[NodeRecord], line: usize) -> Result<Vec<TreeNode>> {
    let bad = |message: String| Error::Parse { line, message };
    if records.is_empty() {
        return Err(bad("tree record has no nodes".into()));
    }
    let mut nodes: Vec<TreeNode> = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.id != i {
            return Err(bad(format!("node ids must be dense and ordered; got {} at {}", r.id, i)));
        }
        nodes.push(TreeNode {
            id: r.id,
            parent: r.parent,
            left: None,
            right: None,
            split_var: r.var,
            split_value: r.split,
            mu: r.mu,
            depth: 0,
        });
    }
    for i in 0..nodes.len() {
        if let Some(p) = nodes[i].parent {
            if p >= nodes.len() {
                return Err(bad(format!("node {i} references missing parent {p}")));
            }
            nodes[i].depth = nodes[p].depth + 1;
            if nodes[p].left.is_none() {
                nodes[p].left = Some(i);
            } else if nodes[p].right.is_none() {
                nodes[p].right = Some(i);
            } else {
                return Err(bad(format!("node {p} has more than two children")));
            }
        }
    }
    // A node with exactly one child cannot be repaired into a binary tree.
    for n in &nodes {
        if n.left.is_some() != n.right.is_some() {
            return Err(bad(format!("node {} has exactly one child", n.id)));
        }
    }
    Ok(nodes)
}
