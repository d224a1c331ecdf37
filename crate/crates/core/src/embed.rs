//! Classical MDS on proximity-derived distances, Procrustes alignment of
//! every iteration's solution to a target iteration, and per-observation
//! centroids with 95% posterior ellipses.

use nalgebra::{DMatrix, Matrix2};
use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::ProximitySeries;
use crate::error::{Error, Result};
use crate::tree::Task;

/// Chi-squared 95% quantile with 2 degrees of freedom, for ellipse axes.
const CHI2_95_2DF: f64 = 5.991;

/// Points get treated as coincident below this squared-norm threshold.
const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct MdsSolution {
    /// n rows of `dims` coordinates.
    pub coords: Vec<Vec<f64>>,
    /// Axes whose eigenvalue was negative (coordinates zeroed).
    pub zeroed_axes: Vec<bool>,
}

/// Classical (Torgerson) MDS: double-center the squared distance matrix,
/// eigendecompose, and scale the top eigenvectors by the square roots of
/// their eigenvalues. Axes with negative eigenvalues among the top `dims`
/// are zeroed and flagged. The sign convention makes each column's
/// largest-magnitude entry positive.
pub fn classical_mds(distances: &[f64], n: usize, dims: usize) -> Result<MdsSolution> {
    if distances.len() != n * n {
        return Err(Error::Domain(format!(
            "distance matrix has {} entries, expected {}",
            distances.len(),
            n * n
        )));
    }
    for a in 0..n {
        if distances[a * n + a] != 0.0 {
            return Err(Error::Domain("distance matrix must have a zero diagonal".into()));
        }
        for b in 0..n {
            let d = distances[a * n + b];
            if d < 0.0 {
                return Err(Error::Domain("distances must be nonnegative".into()));
            }
            if (d - distances[b * n + a]).abs() > 1e-9 {
                return Err(Error::Domain("distance matrix must be symmetric".into()));
            }
        }
    }

    // B = -1/2 J D^2 J with J = I - 11'/n.
    let mut sq = DMatrix::from_fn(n, n, |a, b| {
        let d = distances[a * n + b];
        -0.5 * d * d
    });
    let row_means: Vec<f64> = (0..n).map(|a| sq.row(a).sum() / n as f64).collect();
    let col_means: Vec<f64> = (0..n).map(|b| sq.column(b).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for a in 0..n {
        for b in 0..n {
            sq[(a, b)] += grand - row_means[a] - col_means[b];
        }
    }

    let eig = nalgebra::SymmetricEigen::new(sq);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap().then(a.cmp(&b)));

    let mut coords = vec![vec![0.0; dims]; n];
    let mut zeroed = vec![false; dims];
    for d in 0..dims.min(n) {
        let idx = order[d];
        let lambda = eig.eigenvalues[idx];
        if lambda <= 0.0 {
            zeroed[d] = lambda < 0.0;
            continue;
        }
        let scale = lambda.sqrt();
        let col = eig.eigenvectors.column(idx);
        // Deterministic sign: largest-magnitude entry positive.
        let mut flip = 1.0;
        let mut best = 0.0;
        for a in 0..n {
            if col[a].abs() > best {
                best = col[a].abs();
                flip = if col[a] < 0.0 { -1.0 } else { 1.0 };
            }
        }
        for a in 0..n {
            coords[a][d] = flip * col[a] * scale;
        }
    }
    Ok(MdsSolution { coords, zeroed_axes: zeroed })
}

/// Elementwise distance transform D = 1 - P with a forced zero diagonal.
pub fn proximity_to_distance(proximity: &[f64], n: usize) -> Vec<f64> {
    let mut out: Vec<f64> = proximity.iter().map(|p| (1.0 - p).max(0.0)).collect();
    for a in 0..n {
        out[a * n + a] = 0.0;
    }
    out
}

#[derive(Debug, Clone)]
pub struct ProcrustesFit {
    /// Orthogonal 2x2 transform (reflections permitted, no scaling).
    pub rotation: [[f64; 2]; 2],
    pub aligned: Vec<[f64; 2]>,
    /// Frobenius norm of (aligned source - centered target).
    pub residual: f64,
}

/// Centers both configurations and finds the orthogonal Q minimizing
/// ||source Q - target||_F via the SVD of source' target.
pub fn procrustes_align(source: &[[f64; 2]], target: &[[f64; 2]]) -> Result<ProcrustesFit> {
    if source.len() != target.len() {
        return Err(Error::Domain("configurations must have equal sizes".into()));
    }
    if source.len() < 2 {
        return Err(Error::Domain("need at least 2 points to align".into()));
    }
    let s = centered(source);
    let t = centered(target);
    let s_norm: f64 = s.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum();
    if s_norm < DEGENERATE_NORM {
        return Err(Error::AlignmentUndefined("all source points coincide".into()));
    }

    let mut cross: Matrix2<f64> = Matrix2::zeros();
    for (a, b) in s.iter().zip(&t) {
        cross[(0, 0)] += a[0] * b[0];
        cross[(0, 1)] += a[0] * b[1];
        cross[(1, 0)] += a[1] * b[0];
        cross[(1, 1)] += a[1] * b[1];
    }
    let svd = cross.svd(true, true);
    let u = svd.u.expect("svd with u");
    let vt = svd.v_t.expect("svd with v_t");
    let q: Matrix2<f64> = u * vt;

    let aligned: Vec<[f64; 2]> = s
        .iter()
        .map(|p| {
            [
                p[0] * q[(0, 0)] + p[1] * q[(1, 0)],
                p[0] * q[(0, 1)] + p[1] * q[(1, 1)],
            ]
        })
        .collect();
    let residual = aligned
        .iter()
        .zip(&t)
        .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(ProcrustesFit {
        rotation: [[q[(0, 0)], q[(0, 1)]], [q[(1, 0)], q[(1, 1)]]],
        aligned,
        residual,
    })
}

/// 95% posterior ellipse of one observation's aligned positions.
#[derive(Debug, Clone, Serialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub cov: [[f64; 2]; 2],
    /// Semi-axis lengths sqrt(5.991 * eigenvalue), major first.
    pub semi_axes: [f64; 2],
    /// Rotation of the major axis, radians from the x axis.
    pub angle: f64,
}

impl Ellipse {
    /// Fits the 95% ellipse to a point cloud (sample covariance,
    /// chi-squared(2 df) quantile scaling).
    pub fn fit(points: &[[f64; 2]]) -> Ellipse {
        let n = points.len() as f64;
        let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
        let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
        let denom = (n - 1.0).max(1.0);
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in points {
            let (dx, dy) = (p[0] - cx, p[1] - cy);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        sxx /= denom;
        sxy /= denom;
        syy /= denom;
        // Eigendecomposition of the symmetric 2x2 covariance.
        let trace = sxx + syy;
        let det = sxx * syy - sxy * sxy;
        let disc = (trace * trace / 4.0 - det).max(0.0).sqrt();
        let l1 = (trace / 2.0 + disc).max(0.0);
        let l2 = (trace / 2.0 - disc).max(0.0);
        let angle = if sxy.abs() < 1e-300 && sxx >= syy {
            0.0
        } else if sxy.abs() < 1e-300 {
            std::f64::consts::FRAC_PI_2
        } else {
            (l1 - sxx).atan2(sxy)
        };
        Ellipse {
            center: [cx, cy],
            cov: [[sxx, sxy], [sxy, syy]],
            semi_axes: [(CHI2_95_2DF * l1).sqrt(), (CHI2_95_2DF * l2).sqrt()],
            angle,
        }
    }

    /// Whether a point falls inside the ellipse (Mahalanobis test against
    /// the chi-squared quantile); degenerate covariances contain only their
    /// center.
    pub fn contains(&self, point: [f64; 2]) -> bool {
        let det = self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[1][0];
        let (dx, dy) = (point[0] - self.center[0], point[1] - self.center[1]);
        if det.abs() < 1e-300 {
            return dx == 0.0 && dy == 0.0;
        }
        let inv = [
            [self.cov[1][1] / det, -self.cov[0][1] / det],
            [-self.cov[1][0] / det, self.cov[0][0] / det],
        ];
        let m = dx * (inv[0][0] * dx + inv[0][1] * dy) + dy * (inv[1][0] * dx + inv[1][1] * dy);
        m <= CHI2_95_2DF
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.semi_axes[0] * self.semi_axes[1]
    }
}

/// Per-iteration aligned 2-D configurations with per-observation centroids
/// and 95% ellipses.
#[derive(Debug, Clone)]
pub struct EmbeddingResult {
    /// Aligned coordinates, one configuration per retained iteration.
    pub per_iter: Vec<Vec<[f64; 2]>>,
    /// Absolute iteration index behind each configuration.
    pub iteration_indices: Vec<usize>,
    pub target_iteration: usize,
    pub centroids: Vec<[f64; 2]>,
    pub ellipses: Vec<Ellipse>,
    /// Response value (regression) or class (classification) per observation.
    pub labels: Vec<f64>,
    pub task: Task,
    /// Iterations whose MDS solution collapsed to a point and were left
    /// unrotated at the origin.
    pub degenerate_iterations: usize,
}

/// Runs MDS on every iteration's proximity-derived distances and rotates
/// each solution onto the target iteration's solution.
pub fn build_embedding(
    series: &ProximitySeries<'_>,
    target_iteration: usize,
    labels: Vec<f64>,
    task: Task,
) -> Result<EmbeddingResult> {
    if series.is_empty() {
        return Err(Error::Usage("proximity series is empty".into()));
    }
    let n = series.n();
    if labels.len() != n {
        return Err(Error::Domain(format!("{} labels for {n} observations", labels.len())));
    }
    let target_pos = series
        .iteration_indices
        .iter()
        .position(|&k| k == target_iteration)
        .ok_or_else(|| Error::Usage(format!("iteration {target_iteration} is not in the series")))?;

    let solve = |idx: usize| -> Result<Vec<[f64; 2]>> {
        let prox = series.matrix(idx)?;
        let dist = proximity_to_distance(&prox, n);
        let sol = classical_mds(&dist, n, 2)?;
        Ok(sol.coords.iter().map(|c| [c[0], c[1]]).collect())
    };

    let target_coords = centered(&solve(target_pos)?);
    let target_degenerate = frob_sq(&target_coords) < DEGENERATE_NORM;

    let aligned: Vec<Result<(Vec<[f64; 2]>, bool)>> = (0..series.len())
        .into_par_iter()
        .map(|idx| {
            let coords = centered(&solve(idx)?);
            if target_degenerate || frob_sq(&coords) < DEGENERATE_NORM {
                // Nothing to rotate; keep the centered solution and flag it.
                return Ok((coords, true));
            }
            let fit = procrustes_align(&coords, &target_coords)?;
            Ok((fit.aligned, false))
        })
        .collect();

    let mut per_iter = Vec::with_capacity(series.len());
    let mut degenerate = 0usize;
    for item in aligned {
        let (coords, was_degenerate) = item?;
        if was_degenerate {
            degenerate += 1;
        }
        per_iter.push(coords);
    }

    let k = per_iter.len() as f64;
    let centroids: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let sx = per_iter.iter().map(|c| c[i][0]).sum::<f64>() / k;
            let sy = per_iter.iter().map(|c| c[i][1]).sum::<f64>() / k;
            [sx, sy]
        })
        .collect();
    let ellipses: Vec<Ellipse> = (0..n)
        .map(|i| {
            let pts: Vec<[f64; 2]> = per_iter.iter().map(|c| c[i]).collect();
            Ellipse::fit(&pts)
        })
        .collect();

    Ok(EmbeddingResult {
        per_iter,
        iteration_indices: series.iteration_indices.clone(),
        target_iteration,
        centroids,
        ellipses,
        labels,
        task,
        degenerate_iterations: degenerate,
    })
}

fn centered(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    points.iter().map(|p| [p[0] - cx, p[1] - cy]).collect()
}

fn frob_sq(points: &[[f64; 2]]) -> f64 {
    points.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn pairwise(coords: &[Vec<f64>]) -> Vec<f64> {
        let n = coords.len();
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let d: f64 = coords[a]
                    .iter()
                    .zip(&coords[b])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                out[a * n + b] = d;
            }
        }
        out
    }

    #[test]
    fn collinear_points_recover_on_a_line() {
        // Distances 1 and 2 along a line.
        let d = vec![0.0, 1.0, 3.0, 1.0, 0.0, 2.0, 3.0, 2.0, 0.0];
        let sol = classical_mds(&d, 3, 2).unwrap();
        let emb = pairwise(&sol.coords);
        for (got, want) in emb.iter().zip(&d) {
            assert!((got - want).abs() <= 1e-10, "distance {got} vs {want}");
        }
    }

    #[test]
    fn planar_configuration_distances_are_preserved() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let pts: Vec<Vec<f64>> = (0..12)
            .map(|_| vec![rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0])
            .collect();
        let d = pairwise(&pts);
        let sol = classical_mds(&d, 12, 2).unwrap();
        let emb = pairwise(&sol.coords);
        for (got, want) in emb.iter().zip(&d) {
            assert!((got - want).abs() <= 1e-8, "distance {got} vs {want}");
        }
    }

    #[test]
    fn zero_distances_embed_at_origin() {
        let d = vec![0.0; 16];
        let sol = classical_mds(&d, 4, 2).unwrap();
        for c in &sol.coords {
            assert_eq!(c, &vec![0.0, 0.0]);
        }
    }

    #[test]
    fn invalid_distance_matrices_are_rejected() {
        // Asymmetric.
        let d = vec![0.0, 1.0, 2.0, 0.0];
        assert!(classical_mds(&d, 2, 2).is_err());
        // Negative entry.
        let d = vec![0.0, -1.0, -1.0, 0.0];
        assert!(classical_mds(&d, 2, 2).is_err());
    }

    #[test]
    fn mds_is_permutation_equivariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..8)
            .map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let d = pairwise(&pts);
        let n = 8;
        let perm: Vec<usize> = vec![3, 1, 7, 0, 5, 2, 6, 4];
        let mut dp = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                dp[a * n + b] = d[perm[a] * n + perm[b]];
            }
        }
        let sol = classical_mds(&d, n, 2).unwrap();
        let solp = classical_mds(&dp, n, 2).unwrap();
        for a in 0..n {
            for dim in 0..2 {
                assert!(
                    (solp.coords[a][dim] - sol.coords[perm[a]][dim]).abs() <= 1e-9,
                    "permuted output should match inverse-permuted input"
                );
            }
        }
    }

    #[test]
    fn proximity_distance_transform() {
        let p = vec![1.0, 1.0, 1.0, 1.0];
        assert_eq!(proximity_to_distance(&p, 2), vec![0.0, 0.0, 0.0, 0.0]);
        let p = vec![1.0, 0.0, 0.0, 1.0];
        assert_eq!(proximity_to_distance(&p, 2), vec![0.0, 1.0, 1.0, 0.0]);
        let p = vec![1.0, 0.25, 0.25, 1.0];
        assert_eq!(proximity_to_distance(&p, 2), vec![0.0, 0.75, 0.75, 0.0]);
    }

    #[test]
    fn procrustes_self_alignment_is_identity() {
        let pts = vec![[0.0, 0.0], [1.0, 0.5], [-0.5, 2.0], [2.0, -1.0]];
        let fit = procrustes_align(&pts, &pts).unwrap();
        assert!(fit.residual <= 1e-10);
        assert!((fit.rotation[0][0] - 1.0).abs() <= 1e-12);
        assert!((fit.rotation[1][1] - 1.0).abs() <= 1e-12);
        assert!(fit.rotation[0][1].abs() <= 1e-12);
        assert!(fit.rotation[1][0].abs() <= 1e-12);
    }

    #[test]
    fn procrustes_recovers_a_known_rotation() {
        let target = vec![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.5, -1.5]];
        let theta = std::f64::consts::FRAC_PI_6; // 30 degrees
        let source: Vec<[f64; 2]> = target
            .iter()
            .map(|p| {
                [
                    p[0] * theta.cos() - p[1] * theta.sin(),
                    p[0] * theta.sin() + p[1] * theta.cos(),
                ]
            })
            .collect();
        let fit = procrustes_align(&source, &target).unwrap();
        assert!(fit.residual <= 1e-10, "residual {}", fit.residual);
        let det = fit.rotation[0][0] * fit.rotation[1][1] - fit.rotation[0][1] * fit.rotation[1][0];
        assert_relative_eq!(det, 1.0, epsilon = 1e-10);
        // Q must invert the applied rotation.
        assert_relative_eq!(fit.rotation[0][0], theta.cos(), epsilon = 1e-10);
        assert_relative_eq!(fit.rotation[0][1], -theta.sin(), epsilon = 1e-10);
    }

    #[test]
    fn procrustes_recovers_a_reflection() {
        let target = vec![[1.0, 0.2], [0.3, 1.0], [-1.0, 0.4], [0.5, -1.5]];
        let source: Vec<[f64; 2]> = target.iter().map(|p| [-p[0], p[1]]).collect();
        let fit = procrustes_align(&source, &target).unwrap();
        assert!(fit.residual <= 1e-10, "residual {}", fit.residual);
        let det = fit.rotation[0][0] * fit.rotation[1][1] - fit.rotation[0][1] * fit.rotation[1][0];
        assert_relative_eq!(det, -1.0, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_source_is_an_alignment_error() {
        let source = vec![[1.0, 1.0]; 4];
        let target = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert!(matches!(
            procrustes_align(&source, &target),
            Err(Error::AlignmentUndefined(_))
        ));
    }

    #[test]
    fn alignment_never_hurts_and_preserves_distances() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..10 {
            let source: Vec<[f64; 2]> = (0..6).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
            let target: Vec<[f64; 2]> = (0..6).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
            let fit = procrustes_align(&source, &target).unwrap();
            let s = centered(&source);
            let t = centered(&target);
            let direct: f64 = s
                .iter()
                .zip(&t)
                .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(fit.residual <= direct + 1e-12);
            // Rigid transform: within-configuration distances preserved.
            for a in 0..6 {
                for b in 0..6 {
                    let before = ((s[a][0] - s[b][0]).powi(2) + (s[a][1] - s[b][1]).powi(2)).sqrt();
                    let after = ((fit.aligned[a][0] - fit.aligned[b][0]).powi(2)
                        + (fit.aligned[a][1] - fit.aligned[b][1]).powi(2))
                    .sqrt();
                    assert!((before - after).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn ellipse_contains_about_95_percent_of_isotropic_points() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let normal = rand_distr::StandardNormal;
        let pts: Vec<[f64; 2]> = (0..2000)
            .map(|_| {
                [
                    rand_distr::Distribution::sample(&normal, &mut rng),
                    rand_distr::Distribution::sample(&normal, &mut rng),
                ]
            })
            .collect();
        let e = Ellipse::fit(&pts);
        let inside = pts.iter().filter(|p| e.contains(**p)).count();
        let rate = inside as f64 / pts.len() as f64;
        assert!((0.90..=0.99).contains(&rate), "containment {rate}");
    }

    #[test]
    fn ellipse_area_grows_with_spread() {
        let tight: Vec<[f64; 2]> = (0..100)
            .map(|i| {
                let a = i as f64 / 100.0 * std::f64::consts::TAU;
                [0.1 * a.cos(), 0.2 * a.sin()]
            })
            .collect();
        let wide: Vec<[f64; 2]> = tight.iter().map(|p| [p[0] * 5.0, p[1] * 5.0]).collect();
        assert!(Ellipse::fit(&wide).area() > Ellipse::fit(&tight).area());
    }
}
