//! Marginalized leaf likelihood and the branching-process tree prior.

use crate::error::{Error, Result};
use crate::tree::TreeNode;

/// Per-leaf sufficient statistics: observation count, residual sum,
/// residual sum of squares.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LeafStats {
    pub n: usize,
    pub sum: f64,
    pub sumsq: f64,
}

/// Log of the leaf-parameter-marginalized likelihood from sufficient stats.
///
/// Each leaf integrates its mean parameter against a N(0, sigma_mu^2) prior:
///
///   (2 pi sigma^2)^(-n/2) * sqrt(sigma^2 / (sigma^2 + n sigma_mu^2))
///     * exp(-[sumsq - sigma_mu^2 sum^2 / (sigma^2 + n sigma_mu^2)] / (2 sigma^2))
///
/// Empty leaves contribute exactly 0.
pub(crate) fn log_marginal_from_stats(stats: &[LeafStats], sigma: f64, sigma_mu: f64) -> f64 {
    let s2 = sigma * sigma;
    let sm2 = sigma_mu * sigma_mu;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    for leaf in stats {
        if leaf.n == 0 {
            continue;
        }
        let n = leaf.n as f64;
        let denom = s2 + n * sm2;
        total += -0.5 * n * (ln_2pi + s2.ln())
            + 0.5 * (s2 / denom).ln()
            - leaf.sumsq / (2.0 * s2)
            + sm2 * leaf.sum * leaf.sum / (2.0 * s2 * denom);
    }
    total
}

/// Log marginalized likelihood of per-terminal residual vectors.
pub fn log_marginal_likelihood(node_residuals: &[Vec<f64>], sigma: f64, sigma_mu: f64) -> Result<f64> {
    if !(sigma > 0.0) || !(sigma_mu > 0.0) {
        return Err(Error::Domain(format!(
            "variances must be positive, got sigma = {sigma}, sigma_mu = {sigma_mu}"
        )));
    }
    let stats: Vec<LeafStats> = node_residuals
        .iter()
        .map(|r| LeafStats {
            n: r.len(),
            sum: r.iter().sum(),
            sumsq: r.iter().map(|v| v * v).sum(),
        })
        .collect();
    Ok(log_marginal_from_stats(&stats, sigma, sigma_mu))
}

/// Log prior of a tree topology under the branching-process prior with
/// split probability alpha * (1 + depth)^(-beta).
pub fn log_tree_prior(nodes: &[TreeNode], alpha: f64, beta: f64) -> f64 {
    nodes
        .iter()
        .map(|node| {
            let p_split = alpha * (1.0 + node.depth as f64).powf(-beta);
            if node.is_internal() {
                p_split.ln()
            } else {
                (1.0 - p_split).ln()
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::testutil::{leaf, split, tree};
    use approx::assert_relative_eq;

    /// Adaptive Simpson quadrature, used as an independent oracle for the
    /// closed-form marginal likelihood.
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fb: f64, fm: f64, eps: f64, depth: usize) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
            left + right + (left + right - whole) / 15.0
        } else {
            simpson(f, a, m, fa, fm, flm, eps / 2.0, depth - 1)
                + simpson(f, m, b, fm, fb, frm, eps / 2.0, depth - 1)
        }
    }

    pub(crate) fn quadrature_leaf_log_marginal(residuals: &[f64], sigma: f64, sigma_mu: f64) -> f64 {
        let integrand = |mu: f64| -> f64 {
            let mut logp = -0.5 * (mu / sigma_mu).powi(2)
                - 0.5 * (2.0 * std::f64::consts::PI).ln()
                - sigma_mu.ln();
            for &r in residuals {
                logp += -0.5 * ((r - mu) / sigma).powi(2)
                    - 0.5 * (2.0 * std::f64::consts::PI).ln()
                    - sigma.ln();
            }
            logp.exp()
        };
        let half_width = 12.0 * sigma_mu.max(sigma);
        let (a, b) = (-half_width, half_width);
        let (fa, fb, fm) = (integrand(a), integrand(b), integrand(0.5 * (a + b)));
        simpson(&integrand, a, b, fa, fb, fm, 1e-14, 40).ln()
    }

    #[test]
    fn single_zero_residual_matches_closed_form() {
        let got = log_marginal_likelihood(&[vec![0.0]], 1.0, 1.0).unwrap();
        let expect = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * 2.0f64.ln();
        assert_relative_eq!(got, expect, max_relative = 1e-12);
    }

    #[test]
    fn symmetric_pair_matches_quadrature() {
        let got = log_marginal_likelihood(&[vec![1.0, -1.0]], 1.0, 0.5).unwrap();
        let oracle = quadrature_leaf_log_marginal(&[1.0, -1.0], 1.0, 0.5);
        assert_relative_eq!(got, oracle, max_relative = 1e-6);
    }

    #[test]
    fn empty_leaf_contributes_zero() {
        let with_empty = log_marginal_likelihood(&[vec![0.3, -0.1], vec![]], 0.8, 0.2).unwrap();
        let without = log_marginal_likelihood(&[vec![0.3, -0.1]], 0.8, 0.2).unwrap();
        assert_eq!(with_empty, without);
        assert_eq!(log_marginal_likelihood(&[vec![]], 0.8, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn nonpositive_variances_rejected() {
        assert!(log_marginal_likelihood(&[vec![0.0]], 0.0, 1.0).is_err());
        assert!(log_marginal_likelihood(&[vec![0.0]], 1.0, -1.0).is_err());
    }

    #[test]
    fn random_small_leaves_match_quadrature() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.gen_range(1..=5);
            let residuals: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let sigma = rng.gen_range(0.3..2.0);
            let sigma_mu = rng.gen_range(0.1..1.0);
            let got = log_marginal_likelihood(&[residuals.clone()], sigma, sigma_mu).unwrap();
            let oracle = quadrature_leaf_log_marginal(&residuals, sigma, sigma_mu);
            assert_relative_eq!(got, oracle, max_relative = 1e-6);
        }
    }

    #[test]
    fn tree_prior_values() {
        let (alpha, beta) = (0.95, 2.0);
        let stump = tree(leaf(0.0));
        assert_relative_eq!(log_tree_prior(&stump.nodes, alpha, beta), (1.0f64 - 0.95).ln());

        let one = tree(split(0, 0.5, leaf(0.0), leaf(0.0)));
        let expect = 0.95f64.ln() + 2.0 * (1.0 - 0.95 / 4.0f64).ln();
        assert_relative_eq!(log_tree_prior(&one.nodes, alpha, beta), expect, max_relative = 1e-12);

        // Depth-2 chain: internals at depths 0 and 1, terminals at 1 and 2 x2.
        let chain = tree(split(0, 0.5, split(1, 0.5, leaf(0.0), leaf(0.0)), leaf(0.0)));
        let p = |d: f64| 0.95 * (1.0 + d).powf(-2.0);
        let expect = p(0.0).ln() + p(1.0).ln() + (1.0 - p(1.0)).ln() + 2.0 * (1.0 - p(2.0)).ln();
        assert_relative_eq!(log_tree_prior(&chain.nodes, alpha, beta), expect, max_relative = 1e-12);
    }
}
