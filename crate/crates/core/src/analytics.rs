//! Posterior summaries over the tree ensemble: inclusion-proportion
//! importance and interaction with per-iteration draws, factor aggregation,
//! tree-type frequencies, depth/node series, split-value densities,
//! proximity matrices, and fit diagnostics.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data::{ColumnMeta, Dataset};
use crate::error::{Error, Result};
use crate::stats::{self, Summary};
use crate::tree::{PosteriorEnsemble, Task, TreeDraw, TreeTypeKey};

pub use crate::stats::Summary as VariableSummary;

/// Per-iteration inclusion proportions and their posterior summaries.
///
/// Iterations whose trees contain no splitting rule at all are excluded from
/// the average rather than treated as 0/0; `iteration_indices` records which
/// absolute iterations were retained.
#[derive(Debug, Clone)]
pub struct ImportanceResult {
    pub names: Vec<String>,
    /// One row per retained iteration with at least one split; rows sum to 1.
    pub per_iter: Vec<Vec<f64>>,
    pub iteration_indices: Vec<usize>,
    pub summary: Vec<Summary>,
}

impl ImportanceResult {
    /// Posterior mean proportion per variable.
    pub fn vimp(&self) -> Vec<f64> {
        self.summary.iter().map(|s| s.mean).collect()
    }
}

/// Per-iteration successive-split proportions over unordered variable pairs,
/// including the r = q diagonal slots.
#[derive(Debug, Clone)]
pub struct InteractionResult {
    pub names: Vec<String>,
    /// Unordered pairs (r, q) with r <= q, row-major over the upper triangle.
    pub pairs: Vec<(usize, usize)>,
    pub per_iter: Vec<Vec<f64>>,
    pub iteration_indices: Vec<usize>,
    pub summary: Vec<Summary>,
}

impl InteractionResult {
    pub fn pair_position(&self, r: usize, q: usize) -> usize {
        let (r, q) = if r <= q { (r, q) } else { (q, r) };
        let p = self.names.len();
        r * p - r * (r + 1) / 2 + q
    }

    /// Posterior mean interaction for a pair.
    pub fn vint(&self, r: usize, q: usize) -> f64 {
        self.summary[self.pair_position(r, q)].mean
    }

    /// Dense symmetric matrix of posterior means.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        let p = self.names.len();
        let mut out = vec![vec![0.0; p]; p];
        for (idx, &(r, q)) in self.pairs.iter().enumerate() {
            out[r][q] = self.summary[idx].mean;
            out[q][r] = self.summary[idx].mean;
        }
        out
    }
}

fn upper_triangle_pairs(p: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(p * (p + 1) / 2);
    for r in 0..p {
        for q in r..p {
            pairs.push((r, q));
        }
    }
    pairs
}

/// Splitting-rule inclusion proportions per retained iteration (variable
/// importance); proportions are over all rules in all m trees of an
/// iteration.
pub fn inclusion_importance(ensemble: &PosteriorEnsemble) -> Result<ImportanceResult> {
    let p = ensemble.schema.p;
    let mut per_iter = Vec::new();
    let mut kept = Vec::new();
    for k in ensemble.retained_indices() {
        let mut counts = vec![0usize; p];
        for t in &ensemble.iterations[k].trees {
            for node in &t.nodes {
                if let Some(v) = node.split_var {
                    counts[v] += 1;
                }
            }
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            continue;
        }
        per_iter.push(counts.iter().map(|&c| c as f64 / total as f64).collect());
        kept.push(k);
    }
    if per_iter.is_empty() {
        return Err(Error::EmptyPosterior);
    }
    let summary = summarize_columns(&per_iter, p);
    Ok(ImportanceResult {
        names: ensemble.schema.column_names.clone(),
        per_iter,
        iteration_indices: kept,
        summary,
    })
}

/// Successive (parent-child) split-variable pair proportions per retained
/// iteration (variable interaction). Pair order is ignored and r = q pairs
/// are counted; iterations with no successive pair are excluded.
pub fn inclusion_interaction(ensemble: &PosteriorEnsemble) -> Result<InteractionResult> {
    let p = ensemble.schema.p;
    let pairs = upper_triangle_pairs(p);
    let pos = |r: usize, q: usize| -> usize {
        let (r, q) = if r <= q { (r, q) } else { (q, r) };
        r * p - r * (r + 1) / 2 + q
    };
    let mut per_iter = Vec::new();
    let mut kept = Vec::new();
    for k in ensemble.retained_indices() {
        let mut counts = vec![0usize; pairs.len()];
        let mut total = 0usize;
        for t in &ensemble.iterations[k].trees {
            for node in &t.nodes {
                if let Some(pv) = node.split_var {
                    for child in [node.left, node.right].into_iter().flatten() {
                        if let Some(cv) = t.nodes[child].split_var {
                            counts[pos(pv, cv)] += 1;
                            total += 1;
                        }
                    }
                }
            }
        }
        if total == 0 {
            continue;
        }
        per_iter.push(counts.iter().map(|&c| c as f64 / total as f64).collect());
        kept.push(k);
    }
    let summary = summarize_columns(&per_iter, pairs.len());
    Ok(InteractionResult {
        names: ensemble.schema.column_names.clone(),
        pairs,
        per_iter,
        iteration_indices: kept,
        summary,
    })
}

fn summarize_columns(rows: &[Vec<f64>], width: usize) -> Vec<Summary> {
    (0..width)
        .map(|j| {
            let draws: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            stats::summarize(&draws)
        })
        .collect()
}

/// Groups of original columns to aggregate over; numeric columns are
/// singleton groups, dummy columns group under their parent factor.
#[derive(Debug, Clone)]
pub struct FactorMap {
    pub groups: Vec<(String, Vec<usize>)>,
}

impl FactorMap {
    pub fn from_columns(columns: &[ColumnMeta]) -> FactorMap {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (j, c) in columns.iter().enumerate() {
            let name = c.display_group().to_string();
            match groups.iter_mut().find(|(g, _)| *g == name) {
                Some((_, members)) => members.push(j),
                None => groups.push((name, vec![j])),
            }
        }
        FactorMap { groups }
    }

    fn validate(&self, p: usize) -> Result<()> {
        let mut seen = vec![false; p];
        for (name, members) in &self.groups {
            for &j in members {
                if j >= p {
                    return Err(Error::FactorMapping(format!(
                        "group {name} references column {j}, but there are only {p} columns"
                    )));
                }
                if seen[j] {
                    return Err(Error::FactorMapping(format!("column {j} appears in two groups")));
                }
                seen[j] = true;
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::FactorMapping(format!("column {j} is missing from the factor map")));
        }
        Ok(())
    }
}

/// Sums importance proportions over factor levels per iteration, then
/// re-summarizes on the aggregated variables.
pub fn aggregate_importance(result: &ImportanceResult, map: &FactorMap) -> Result<ImportanceResult> {
    map.validate(result.names.len())?;
    let per_iter: Vec<Vec<f64>> = result
        .per_iter
        .iter()
        .map(|row| {
            map.groups
                .iter()
                .map(|(_, members)| members.iter().map(|&j| row[j]).sum())
                .collect()
        })
        .collect();
    let summary = summarize_columns(&per_iter, map.groups.len());
    Ok(ImportanceResult {
        names: map.groups.iter().map(|(n, _)| n.clone()).collect(),
        per_iter,
        iteration_indices: result.iteration_indices.clone(),
        summary,
    })
}

/// Sums interaction proportions over factor-level pairs per iteration;
/// within-factor level pairs fold into the factor's diagonal entry.
pub fn aggregate_interaction(result: &InteractionResult, map: &FactorMap) -> Result<InteractionResult> {
    let p_old = result.names.len();
    map.validate(p_old)?;
    let g = map.groups.len();
    // Old column index -> group index.
    let mut group_of = vec![0usize; p_old];
    for (gi, (_, members)) in map.groups.iter().enumerate() {
        for &j in members {
            group_of[j] = gi;
        }
    }
    let new_pairs = upper_triangle_pairs(g);
    let new_pos = |r: usize, q: usize| -> usize {
        let (r, q) = if r <= q { (r, q) } else { (q, r) };
        r * g - r * (r + 1) / 2 + q
    };
    let per_iter: Vec<Vec<f64>> = result
        .per_iter
        .iter()
        .map(|row| {
            let mut out = vec![0.0; new_pairs.len()];
            for (idx, &(r, q)) in result.pairs.iter().enumerate() {
                out[new_pos(group_of[r], group_of[q])] += row[idx];
            }
            out
        })
        .collect();
    let summary = summarize_columns(&per_iter, new_pairs.len());
    Ok(InteractionResult {
        names: map.groups.iter().map(|(n, _)| n.clone()).collect(),
        pairs: new_pairs,
        per_iter,
        iteration_indices: result.iteration_indices.clone(),
        summary,
    })
}

/// Which trees a tree-type count runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeScope {
    /// All trees of every retained iteration.
    AllIterations,
    /// All m trees of one absolute iteration index.
    SingleIteration(usize),
    /// One tree index followed across retained iterations.
    SingleTreeOverIterations(usize),
}

/// Counts canonical tree types in scope, most frequent first (ties broken
/// lexicographically by key).
pub fn tree_type_frequencies(
    ensemble: &PosteriorEnsemble,
    scope: TreeScope,
) -> Result<Vec<(TreeTypeKey, usize)>> {
    let mut counts: BTreeMap<TreeTypeKey, usize> = BTreeMap::new();
    let mut bump = |t: &TreeDraw| {
        *counts.entry(t.canonical_key()).or_insert(0) += 1;
    };
    match scope {
        TreeScope::AllIterations => {
            for it in ensemble.retained() {
                it.trees.iter().for_each(&mut bump);
            }
        }
        TreeScope::SingleIteration(k) => {
            let it = ensemble
                .iterations
                .get(k)
                .ok_or_else(|| Error::Usage(format!("iteration {k} out of range")))?;
            it.trees.iter().for_each(&mut bump);
        }
        TreeScope::SingleTreeOverIterations(j) => {
            if j >= ensemble.m {
                return Err(Error::Usage(format!("tree index {j} out of range for m = {}", ensemble.m)));
            }
            for it in ensemble.retained() {
                bump(&it.trees[j]);
            }
        }
    }
    let mut out: Vec<(TreeTypeKey, usize)> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// Per-iteration mean tree depth and mean node count over the m trees,
/// for every iteration including burn-in.
pub fn depth_node_series(ensemble: &PosteriorEnsemble) -> (Vec<f64>, Vec<f64>) {
    let m = ensemble.m as f64;
    let mut depth = Vec::with_capacity(ensemble.total_iters());
    let mut nodes = Vec::with_capacity(ensemble.total_iters());
    for it in &ensemble.iterations {
        depth.push(it.trees.iter().map(|t| t.depth() as f64).sum::<f64>() / m);
        nodes.push(it.trees.iter().map(|t| t.node_count() as f64).sum::<f64>() / m);
    }
    (depth, nodes)
}

/// Split-value density against the predictor's own density, per variable.
#[derive(Debug, Clone)]
pub struct DensityPair {
    pub name: String,
    pub grid: Vec<f64>,
    /// All zeros with `has_splits == false` when the variable is never
    /// split on.
    pub split_density: Vec<f64>,
    pub data_density: Vec<f64>,
    pub split_count: usize,
    pub has_splits: bool,
}

const KDE_GRID: usize = 512;

/// Gaussian KDEs (Silverman bandwidth, 512-point grid spanning each
/// variable's observed range) of split values over retained iterations,
/// overlaid on the predictor densities.
pub fn split_value_densities(ensemble: &PosteriorEnsemble, data: &Dataset) -> Result<Vec<DensityPair>> {
    ensemble.schema.check(data)?;
    let p = data.p();
    let mut split_values: Vec<Vec<f64>> = vec![Vec::new(); p];
    for it in ensemble.retained() {
        for t in &it.trees {
            for node in &t.nodes {
                if let (Some(v), Some(c)) = (node.split_var, node.split_value) {
                    split_values[v].push(c);
                }
            }
        }
    }
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let col = data.column(j);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in col {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi <= lo {
            hi = lo + 1.0;
        }
        let grid: Vec<f64> = (0..KDE_GRID)
            .map(|i| lo + (hi - lo) * i as f64 / (KDE_GRID - 1) as f64)
            .collect();
        let data_density = stats::gaussian_kde(col, &grid);
        let has_splits = !split_values[j].is_empty();
        let split_density = if has_splits {
            stats::gaussian_kde(&split_values[j], &grid)
        } else {
            vec![0.0; KDE_GRID]
        };
        out.push(DensityPair {
            name: data.columns()[j].name.clone(),
            grid,
            split_density,
            data_density,
            split_count: split_values[j].len(),
            has_splits,
        });
    }
    Ok(out)
}

/// Per-iteration n x n proximity matrices, computed lazily because the full
/// series is large at desk scale.
pub struct ProximitySeries<'a> {
    ensemble: &'a PosteriorEnsemble,
    data: &'a Dataset,
    pub iteration_indices: Vec<usize>,
}

impl<'a> ProximitySeries<'a> {
    pub fn len(&self) -> usize {
        self.iteration_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iteration_indices.is_empty()
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    /// Proximity matrix (row-major n x n) for series position `idx`: entry
    /// (a, b) is the fraction of the m trees routing rows a and b into the
    /// same terminal node.
    pub fn matrix(&self, idx: usize) -> Result<Vec<f64>> {
        let k = self.iteration_indices[idx];
        let n = self.n();
        let mut counts = vec![0u32; n * n];
        for t in &self.ensemble.iterations[k].trees {
            let rows = t.route_observations(self.data)?;
            for (id, node_rows) in rows.iter().enumerate() {
                if t.nodes[id].is_internal() {
                    continue;
                }
                for (ai, &a) in node_rows.iter().enumerate() {
                    counts[a * n + a] += 1;
                    for &b in node_rows.iter().skip(ai + 1) {
                        counts[a * n + b] += 1;
                        counts[b * n + a] += 1;
                    }
                }
            }
        }
        let m = self.ensemble.m as f64;
        Ok(counts.into_iter().map(|c| c as f64 / m).collect())
    }

    /// Mean proximity matrix over the retained iterations.
    pub fn mean_matrix(&self) -> Result<Vec<f64>> {
        let n = self.n();
        let partials: Vec<Vec<f64>> = (0..self.len())
            .into_par_iter()
            .map(|idx| self.matrix(idx))
            .collect::<Result<_>>()?;
        let mut out = vec![0.0; n * n];
        for p in &partials {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        let k = self.len() as f64;
        out.iter_mut().for_each(|v| *v /= k);
        Ok(out)
    }
}

pub fn proximity_series<'a>(
    ensemble: &'a PosteriorEnsemble,
    data: &'a Dataset,
) -> Result<ProximitySeries<'a>> {
    ensemble.schema.check(data)?;
    Ok(ProximitySeries {
        ensemble,
        data,
        iteration_indices: ensemble.retained_indices().collect(),
    })
}

/// Retained iteration with the lowest residual standard deviation (sigma for
/// regression, the latent residual sd for classification); ties take the
/// smallest index.
pub fn target_iteration(ensemble: &PosteriorEnsemble) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for k in ensemble.retained_indices() {
        let it = &ensemble.iterations[k];
        let value = match ensemble.task {
            Task::Regression => it.sigma,
            Task::BinaryClassification => it.latent_resid_sd.ok_or_else(|| {
                Error::Domain("classification dump lacks latent residual sd".into())
            })?,
        };
        match best {
            Some((_, cur)) if value >= cur => {}
            _ => best = Some((k, value)),
        }
    }
    best.map(|(k, _)| k)
        .ok_or_else(|| Error::Usage("ensemble has no retained iterations".into()))
}

/// Regression fit panel: fitted means with posterior-predictive 95%
/// intervals, residuals, QQ points, sigma trace, and residual histogram.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RegressionDiagnostics {
    pub y: Vec<f64>,
    pub fitted_mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub residuals: Vec<f64>,
    pub qq_theoretical: Vec<f64>,
    pub qq_sample: Vec<f64>,
    pub sigma_trace: Vec<f64>,
    pub burn_in: usize,
    pub hist_breaks: Vec<f64>,
    pub hist_counts: Vec<usize>,
    /// Fraction of responses inside their 95% interval.
    pub coverage: f64,
    pub fit_correlation: f64,
}

pub fn regression_diagnostics(ensemble: &PosteriorEnsemble, data: &Dataset) -> Result<RegressionDiagnostics> {
    if ensemble.task != Task::Regression {
        return Err(Error::WrongTask { expected: "regression" });
    }
    ensemble.schema.check(data)?;
    let y = data.y().to_vec();
    let n = y.len();
    let fitted_mean = ensemble.fitted_mean();
    let sigmas: Vec<f64> = ensemble.retained().iter().map(|it| it.sigma).collect();

    let bounds: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let draws: Vec<f64> = ensemble.fitted.iter().map(|f| f[i]).collect();
            (
                predictive_quantile(&draws, &sigmas, 0.025),
                predictive_quantile(&draws, &sigmas, 0.975),
            )
        })
        .collect();
    let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();

    let residuals: Vec<f64> = y.iter().zip(&fitted_mean).map(|(a, b)| a - b).collect();
    let sd = stats::sample_sd(&residuals).max(f64::MIN_POSITIVE);
    let mut standardized: Vec<f64> = residuals.iter().map(|r| r / sd).collect();
    standardized.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let qq_theoretical: Vec<f64> = (0..n)
        .map(|i| stats::norm_quantile((i as f64 + 0.5) / n as f64))
        .collect();

    let covered = y
        .iter()
        .zip(lower.iter().zip(&upper))
        .filter(|(v, (lo, hi))| **v >= **lo && **v <= **hi)
        .count();
    let (hist_breaks, hist_counts) = stats::histogram(&residuals, stats::sturges_bins(n));
    let fit_correlation = stats::pearson(&y, &fitted_mean);

    Ok(RegressionDiagnostics {
        y,
        fitted_mean,
        lower,
        upper,
        residuals,
        qq_theoretical,
        qq_sample: standardized,
        sigma_trace: ensemble.iterations.iter().map(|it| it.sigma).collect(),
        burn_in: ensemble.burn_in,
        hist_breaks,
        hist_counts,
        coverage: covered as f64 / n as f64,
        fit_correlation,
    })
}

/// Quantile of the posterior-predictive mixture mean_k N(draw_k, sigma_k^2)
/// by bisection on its CDF.
fn predictive_quantile(draws: &[f64], sigmas: &[f64], p: f64) -> f64 {
    let max_sigma = sigmas.iter().cloned().fold(0.0f64, f64::max).max(1e-12);
    let mut lo = draws.iter().cloned().fold(f64::INFINITY, f64::min) - 8.0 * max_sigma;
    let mut hi = draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 8.0 * max_sigma;
    let cdf = |t: f64| -> f64 {
        let total: f64 = draws
            .iter()
            .zip(sigmas)
            .map(|(&f, &s)| stats::norm_cdf((t - f) / s.max(1e-12)))
            .sum();
        total / draws.len() as f64
    };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Classification fit panel: ROC and precision-recall bands over the
/// per-iteration probability draws, a confusion matrix at threshold 0.5 on
/// the posterior-mean probabilities, and the probability histogram.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ClassificationDiagnostics {
    pub fpr_grid: Vec<f64>,
    pub roc_median: Vec<f64>,
    pub roc_lower: Vec<f64>,
    pub roc_upper: Vec<f64>,
    pub recall_grid: Vec<f64>,
    pub pr_median: Vec<f64>,
    pub pr_lower: Vec<f64>,
    pub pr_upper: Vec<f64>,
    pub auc: f64,
    /// confusion[actual][predicted] at threshold 0.5.
    pub confusion: [[usize; 2]; 2],
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub prob_hist_breaks: Vec<f64>,
    pub prob_hist_counts: Vec<usize>,
}

const CURVE_GRID: usize = 101;

pub fn classification_diagnostics(
    ensemble: &PosteriorEnsemble,
    data: &Dataset,
) -> Result<ClassificationDiagnostics> {
    if ensemble.task != Task::BinaryClassification {
        return Err(Error::WrongTask { expected: "classification" });
    }
    ensemble.schema.check(data)?;
    let y = data.y();
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::DegenerateResponse("classification diagnostics need a 0/1 response".into()));
    }

    let grid: Vec<f64> = (0..CURVE_GRID).map(|i| i as f64 / (CURVE_GRID - 1) as f64).collect();
    let roc_curves: Vec<Vec<f64>> = ensemble
        .fitted
        .par_iter()
        .map(|probs| roc_at_grid(y, probs, &grid))
        .collect();
    let pr_curves: Vec<Vec<f64>> = ensemble
        .fitted
        .par_iter()
        .map(|probs| pr_at_grid(y, probs, &grid))
        .collect();

    let band = |curves: &[Vec<f64>], q: f64| -> Vec<f64> {
        (0..CURVE_GRID)
            .map(|g| stats::quantile(&curves.iter().map(|c| c[g]).collect::<Vec<_>>(), q))
            .collect()
    };

    let mean_probs = ensemble.fitted_mean();
    let mut confusion = [[0usize; 2]; 2];
    for (i, &prob) in mean_probs.iter().enumerate() {
        let actual = (y[i] == 1.0) as usize;
        let predicted = (prob >= 0.5) as usize;
        confusion[actual][predicted] += 1;
    }
    let tp = confusion[1][1] as f64;
    let fp = confusion[0][1] as f64;
    let fnn = confusion[1][0] as f64;
    let tn = confusion[0][0] as f64;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
    let (prob_hist_breaks, prob_hist_counts) = stats::histogram(&mean_probs, 20);

    Ok(ClassificationDiagnostics {
        fpr_grid: grid.clone(),
        roc_median: band(&roc_curves, 0.5),
        roc_lower: band(&roc_curves, 0.025),
        roc_upper: band(&roc_curves, 0.975),
        recall_grid: grid,
        pr_median: band(&pr_curves, 0.5),
        pr_lower: band(&pr_curves, 0.025),
        pr_upper: band(&pr_curves, 0.975),
        auc: stats::auc(y, &mean_probs),
        confusion,
        accuracy: (tp + tn) / y.len() as f64,
        precision,
        recall,
        f1: if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        },
        prob_hist_breaks,
        prob_hist_counts,
    })
}

/// True-positive rate at each false-positive grid point (step interpolation).
fn roc_at_grid(y: &[f64], scores: &[f64], grid: &[f64]) -> Vec<f64> {
    let pos = y.iter().filter(|&&v| v == 1.0).count().max(1) as f64;
    let neg = y.iter().filter(|&&v| v == 0.0).count().max(1) as f64;
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    // Curve points after each distinct threshold.
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y[order[i]] == 1.0 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push((fp / neg, tp / pos));
    }
    grid.iter()
        .map(|&g| {
            points
                .iter()
                .filter(|(f, _)| *f <= g + 1e-12)
                .map(|&(_, t)| t)
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Interpolated precision at each recall grid point: the maximum precision
/// among curve points with recall at least the grid value.
fn pr_at_grid(y: &[f64], scores: &[f64], grid: &[f64]) -> Vec<f64> {
    let pos = y.iter().filter(|&&v| v == 1.0).count().max(1) as f64;
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y[order[i]] == 1.0 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push((tp / pos, tp / (tp + fp)));
    }
    grid.iter()
        .map(|&g| {
            points
                .iter()
                .filter(|(r, _)| *r >= g - 1e-12)
                .map(|&(_, p)| p)
                .fold(0.0, f64::max)
        })
        .collect()
}
