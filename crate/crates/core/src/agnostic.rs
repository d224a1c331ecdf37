//! Model-agnostic comparators: ensemble prediction, permutation importance,
//! partial dependence, and Friedman's H in normalized and unnormalized
//! forms, plus the synthetic benchmark generator used to exercise them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::Distribution;
use rayon::prelude::*;

use crate::data::{ColumnMeta, Dataset};
use crate::error::{Error, Result};
use crate::stats;
use crate::tree::{PosteriorEnsemble, Task, TreeNode};

#[derive(Debug, Clone)]
pub struct Prediction {
    /// Mean over retained iterations, exactly the mean of `per_iter`.
    pub mean: Vec<f64>,
    pub per_iter: Vec<Vec<f64>>,
}

/// Predicts rows of `data` from every retained iteration: the sum of leaf
/// values across the m trees, mapped back to the original response scale
/// (probabilities for classification).
pub fn predict(ensemble: &PosteriorEnsemble, data: &Dataset) -> Result<Prediction> {
    if data.column_names() != ensemble.schema.column_names {
        return Err(Error::SchemaMismatch(
            "prediction data columns differ from the fit's schema".into(),
        ));
    }
    let n = data.n();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| data.row(i)).collect();
    let per_iter: Vec<Vec<f64>> = ensemble
        .retained()
        .par_iter()
        .map(|it| {
            rows.iter()
                .map(|x| {
                    let mut s = 0.0;
                    for t in &it.trees {
                        s += t.predict(x);
                    }
                    match ensemble.task {
                        Task::Regression => s * ensemble.y_scale + ensemble.y_center,
                        Task::BinaryClassification => stats::norm_cdf(s),
                    }
                })
                .collect()
        })
        .collect();
    let k = per_iter.len() as f64;
    let mean: Vec<f64> = (0..n)
        .map(|i| per_iter.iter().map(|p| p[i]).sum::<f64>() / k)
        .collect();
    Ok(Prediction { mean, per_iter })
}

/// Mean increase in prediction error after permuting one column at a time:
/// RMSE increase for regression, AUC decrease for classification, averaged
/// over `repeats` permutations with per-(variable, repeat) RNG streams.
pub fn permutation_importance(
    ensemble: &PosteriorEnsemble,
    data: &Dataset,
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if repeats < 1 {
        return Err(Error::Usage("permutation importance needs at least 1 repeat".into()));
    }
    let y = data.y();
    let score = |preds: &[f64]| -> f64 {
        match ensemble.task {
            Task::Regression => {
                (y.iter().zip(preds).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
            }
            Task::BinaryClassification => 1.0 - stats::auc(y, preds),
        }
    };
    let baseline = score(&predict(ensemble, data)?.mean);

    (0..data.p())
        .into_par_iter()
        .map(|var| {
            let mut total = 0.0;
            for rep in 0..repeats {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream((var as u64) * repeats as u64 + rep as u64 + 1);
                let mut col = data.column(var).to_vec();
                // Fisher-Yates shuffle.
                for i in (1..col.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    col.swap(i, j);
                }
                let permuted = data.with_column(var, col)?;
                total += score(&predict(ensemble, &permuted)?.mean) - baseline;
            }
            Ok(total / repeats as f64)
        })
        .collect()
}

/// Mean-centered partial dependence on a quantile grid.
#[derive(Debug, Clone)]
pub struct PDSurface {
    pub vars: Vec<usize>,
    pub grids: Vec<Vec<f64>>,
    /// Row-major over the grid(s); mean over all cells is 0.
    pub values: Vec<f64>,
    /// Set when a constant column collapsed its grid to a single point.
    pub constant_grid: bool,
}

pub const DEFAULT_PD_GRID: usize = 20;

/// Partial dependence of the posterior-mean predictor for one or two
/// variables, on the model's additive scale (the rescaled response for
/// regression, the latent probit scale for classification).
pub fn partial_dependence(
    ensemble: &PosteriorEnsemble,
    data: &Dataset,
    vars: &[usize],
    grid_size: usize,
) -> Result<PDSurface> {
    if vars.is_empty() || vars.len() > 2 {
        return Err(Error::Usage("partial dependence takes 1 or 2 variables".into()));
    }
    if vars.len() == 2 && vars[0] == vars[1] {
        return Err(Error::Usage("partial dependence variables must differ".into()));
    }
    check_vars(ensemble, data, vars)?;
    let mut constant = false;
    let grids: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| {
            let g = quantile_grid(data.column(v), grid_size);
            if g.len() == 1 {
                constant = true;
            }
            g
        })
        .collect();
    let mut values = pd_raw(ensemble, data, vars, &grids);
    let center = stats::mean(&values);
    values.iter_mut().for_each(|v| *v -= center);
    Ok(PDSurface { vars: vars.to_vec(), grids, values, constant_grid: constant })
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct HStatResult {
    pub pair: (usize, usize),
    /// sqrt of the normalized statistic, clamped to [0,1]; absent when the
    /// denominator collapses below 1e-12 and the ratio is untrustworthy.
    pub h_normalized: Option<f64>,
    /// sqrt of the mean squared joint-minus-marginal difference.
    pub h_unnormalized: f64,
}

const H_DENOM_GUARD: f64 = 1e-12;

/// Friedman's H for one variable pair, with partial dependence functions
/// evaluated on quantile grids and summed over the data rows (each row
/// snapped to its nearest grid point).
pub fn h_statistic(
    ensemble: &PosteriorEnsemble,
    data: &Dataset,
    j: usize,
    k: usize,
    grid_size: usize,
) -> Result<HStatResult> {
    if j == k {
        return Err(Error::Usage("h statistic needs two distinct variables".into()));
    }
    check_vars(ensemble, data, &[j, k])?;
    let gj = quantile_grid(data.column(j), grid_size);
    let gk = quantile_grid(data.column(k), grid_size);
    let fj = pd_raw(ensemble, data, &[j], &[gj.clone()]);
    let fk = pd_raw(ensemble, data, &[k], &[gk.clone()]);
    let fjk = pd_raw(ensemble, data, &[j, k], &[gj.clone(), gk.clone()]);

    let n = data.n();
    let sj: Vec<usize> = data.column(j).iter().map(|&v| snap(&gj, v)).collect();
    let sk: Vec<usize> = data.column(k).iter().map(|&v| snap(&gk, v)).collect();
    let mut aj: Vec<f64> = (0..n).map(|i| fj[sj[i]]).collect();
    let mut ak: Vec<f64> = (0..n).map(|i| fk[sk[i]]).collect();
    let mut ajk: Vec<f64> = (0..n).map(|i| fjk[sj[i] * gk.len() + sk[i]]).collect();
    center(&mut aj);
    center(&mut ak);
    center(&mut ajk);

    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let d = ajk[i] - aj[i] - ak[i];
        num += d * d;
        den += ajk[i] * ajk[i];
    }
    Ok(HStatResult {
        pair: (j, k),
        h_normalized: if den < H_DENOM_GUARD {
            None
        } else {
            Some((num / den).clamp(0.0, 1.0).sqrt())
        },
        h_unnormalized: (num / n as f64).sqrt(),
    })
}

/// All unordered pairs, most interacting first by the unnormalized statistic.
pub fn h_statistic_matrix(
    ensemble: &PosteriorEnsemble,
    data: &Dataset,
    grid_size: usize,
) -> Result<Vec<HStatResult>> {
    let p = data.p();
    let mut pairs = Vec::new();
    for j in 0..p {
        for k in (j + 1)..p {
            pairs.push((j, k));
        }
    }
    let mut out: Vec<HStatResult> = pairs
        .into_par_iter()
        .map(|(j, k)| h_statistic(ensemble, data, j, k, grid_size))
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| b.h_unnormalized.partial_cmp(&a.h_unnormalized).unwrap().then(a.pair.cmp(&b.pair)));
    Ok(out)
}

fn check_vars(ensemble: &PosteriorEnsemble, data: &Dataset, vars: &[usize]) -> Result<()> {
    if data.column_names() != ensemble.schema.column_names {
        return Err(Error::SchemaMismatch("data columns differ from the fit's schema".into()));
    }
    for &v in vars {
        if v >= data.p() {
            return Err(Error::Usage(format!("no column {v}")));
        }
    }
    Ok(())
}

fn center(values: &mut [f64]) {
    let m = stats::mean(values);
    values.iter_mut().for_each(|v| *v -= m);
}

/// Quantile-spaced grid at probabilities i/(size+1); collapses to one point
/// for constant columns.
fn quantile_grid(col: &[f64], size: usize) -> Vec<f64> {
    let mut sorted = col.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let grid: Vec<f64> = (1..=size)
        .map(|i| stats::quantile_sorted(&sorted, i as f64 / (size + 1) as f64))
        .collect();
    if grid.iter().all(|&g| g == grid[0]) {
        vec![grid[0]]
    } else {
        grid
    }
}

/// Index of the nearest grid value (ties to the lower index).
fn snap(grid: &[f64], v: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &g) in grid.iter().enumerate() {
        let d = (v - g).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Raw (uncentered) partial dependence accumulated tree by tree.
///
/// For each leaf, the grid cells passing the leaf's conditions on the PD
/// variables form an index rectangle, and the weight is the count of data
/// rows satisfying the leaf's remaining conditions; this reproduces
/// clamp-and-average exactly without re-routing every row for every cell.
fn pd_raw(ensemble: &PosteriorEnsemble, data: &Dataset, vars: &[usize], grids: &[Vec<f64>]) -> Vec<f64> {
    let n = data.n();
    let cells: usize = grids.iter().map(|g| g.len()).product();
    let width = if grids.len() == 2 { grids[1].len() } else { 1 };
    let k = ensemble.k() as f64;

    // Per-iteration partials are collected in order and summed sequentially
    // so the result does not depend on thread scheduling.
    let partials: Vec<Vec<f64>> = ensemble
        .retained()
        .par_iter()
        .map(|it| {
            let mut local = vec![0.0; cells];
            for t in &it.trees {
                accumulate_tree(&t.nodes, data, vars, grids, width, &mut local);
            }
            local
        })
        .collect();
    let mut acc = vec![0.0; cells];
    for partial in &partials {
        for (x, y) in acc.iter_mut().zip(partial) {
            *x += y;
        }
    }

    let scale = match ensemble.task {
        Task::Regression => ensemble.y_scale,
        Task::BinaryClassification => 1.0,
    };
    acc.into_iter().map(|v| v / (n as f64 * k) * scale).collect()
}

fn accumulate_tree(
    nodes: &[TreeNode],
    data: &Dataset,
    vars: &[usize],
    grids: &[Vec<f64>],
    width: usize,
    acc: &mut [f64],
) {
    // Depth-first walk carrying grid index ranges per PD variable and the
    // set of row-filter conditions on the remaining variables.
    struct Frame {
        id: usize,
        ranges: Vec<(usize, usize)>,
        conds: Vec<(usize, f64, bool)>,
    }
    let mut stack = vec![Frame {
        id: 0,
        ranges: grids.iter().map(|g| (0, g.len())).collect(),
        conds: Vec::new(),
    }];
    while let Some(frame) = stack.pop() {
        let node = &nodes[frame.id];
        match (node.left, node.right, node.split_var, node.split_value) {
            (Some(l), Some(r), Some(v), Some(c)) => {
                if let Some(pos) = vars.iter().position(|&pv| pv == v) {
                    let grid = &grids[pos];
                    // Grid values <= c occupy a prefix of the sorted grid.
                    let cut = grid.partition_point(|&g| g <= c);
                    let (lo, hi) = frame.ranges[pos];
                    let left_range = (lo, hi.min(cut));
                    let right_range = (lo.max(cut), hi);
                    if left_range.0 < left_range.1 {
                        let mut ranges = frame.ranges.clone();
                        ranges[pos] = left_range;
                        stack.push(Frame { id: l, ranges, conds: frame.conds.clone() });
                    }
                    if right_range.0 < right_range.1 {
                        let mut ranges = frame.ranges.clone();
                        ranges[pos] = right_range;
                        stack.push(Frame { id: r, ranges, conds: frame.conds.clone() });
                    }
                } else {
                    let mut lc = frame.conds.clone();
                    lc.push((v, c, true));
                    stack.push(Frame { id: l, ranges: frame.ranges.clone(), conds: lc });
                    let mut rc = frame.conds;
                    rc.push((v, c, false));
                    stack.push(Frame { id: r, ranges: frame.ranges, conds: rc });
                }
            }
            _ => {
                let mu = node.mu.unwrap_or(0.0);
                if mu == 0.0 {
                    continue;
                }
                let count = (0..data.n())
                    .filter(|&i| {
                        frame.conds.iter().all(|&(v, c, go_left)| {
                            let x = data.value(i, v);
                            if go_left {
                                x <= c
                            } else {
                                x > c
                            }
                        })
                    })
                    .count();
                if count == 0 {
                    continue;
                }
                let w = mu * count as f64;
                let (r0, r1) = frame.ranges[0];
                if frame.ranges.len() == 2 {
                    let (c0, c1) = frame.ranges[1];
                    for a in r0..r1 {
                        for b in c0..c1 {
                            acc[a * width + b] += w;
                        }
                    }
                } else {
                    for a in r0..r1 {
                        acc[a] += w;
                    }
                }
            }
        }
    }
}

/// Synthetic benchmark: y = 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4
/// + 5 x5 + noise, with all predictors uniform on (0,1) and columns beyond
/// the fifth pure noise.
pub fn friedman_response(x: &[f64]) -> f64 {
    10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
        + 20.0 * (x[2] - 0.5).powi(2)
        + 10.0 * x[3]
        + 5.0 * x[4]
}

pub fn friedman_data(n: usize, p: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 1 {
        return Err(Error::Usage("need at least 1 observation".into()));
    }
    if p < 5 {
        return Err(Error::Usage("the benchmark needs at least 5 predictors".into()));
    }
    if noise_sd < 0.0 {
        return Err(Error::Usage("noise sd must be nonnegative".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, 1.0).expect("standard normal");
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); p];
    let mut y = Vec::with_capacity(n);
    let mut row = vec![0.0; p];
    for _ in 0..n {
        for (j, col) in cols.iter_mut().enumerate() {
            row[j] = rng.gen::<f64>();
            col.push(row[j]);
        }
        y.push(friedman_response(&row) + noise_sd * normal.sample(&mut rng));
    }
    let metas = (0..p).map(|j| ColumnMeta::numeric(format!("x{}", j + 1))).collect();
    Dataset::new(metas, cols, y)
}
