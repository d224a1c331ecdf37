//! Metropolis-within-Gibbs MCMC for the sum-of-trees model, for regression
//! and probit binary classification. Every tree draw and per-iteration
//! acceptance is recorded into a [`PosteriorEnsemble`].

mod likelihood;
mod moves;

pub use likelihood::{log_marginal_likelihood, log_tree_prior};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::Distribution;
use statrs::distribution::ContinuousCDF;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tree::{
    route_nodes, DatasetSchema, IterationDraw, MoveKind, PosteriorEnsemble, Proposal, Task,
    TreeDraw, TreeNode,
};

use likelihood::{log_marginal_from_stats, LeafStats};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveProbs {
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
    pub swap: f64,
}

impl Default for MoveProbs {
    fn default() -> Self {
        MoveProbs { grow: 0.25, prune: 0.25, change: 0.40, swap: 0.10 }
    }
}

impl MoveProbs {
    pub fn get(&self, kind: MoveKind) -> f64 {
        match kind {
            MoveKind::Grow => self.grow,
            MoveKind::Prune => self.prune,
            MoveKind::Change => self.change,
            MoveKind::Swap => self.swap,
        }
    }

    pub fn sum(&self) -> f64 {
        self.grow + self.prune + self.change + self.swap
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Number of trees in the sum.
    pub m: usize,
    pub total_iters: usize,
    pub burn_in: usize,
    /// Tree prior: split probability alpha * (1 + depth)^(-beta).
    pub alpha: f64,
    pub beta: f64,
    /// Leaf-shrinkage multiplier; sigma_mu = 0.5 / (kappa sqrt(m)) for
    /// regression and 3 / (kappa sqrt(m)) for classification.
    pub kappa: f64,
    /// Inverse-Gamma residual variance prior hyperparameters.
    pub nu: f64,
    pub q: f64,
    pub move_probs: MoveProbs,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            m: 20,
            total_iters: 1000,
            burn_in: 100,
            alpha: 0.95,
            beta: 2.0,
            kappa: 2.0,
            nu: 3.0,
            q: 0.90,
            move_probs: MoveProbs::default(),
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Usage("tree count m must be at least 1".into()));
        }
        if self.burn_in >= self.total_iters {
            return Err(Error::Usage(format!(
                "burn-in {} must be smaller than total iterations {}",
                self.burn_in, self.total_iters
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Usage(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if self.beta < 0.0 {
            return Err(Error::Usage(format!("beta must be nonnegative, got {}", self.beta)));
        }
        if self.kappa <= 0.0 || self.nu <= 0.0 || !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::Usage("kappa, nu must be positive and q in (0,1)".into()));
        }
        if (self.move_probs.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::Usage(format!(
                "move probabilities must sum to 1, got {}",
                self.move_probs.sum()
            )));
        }
        Ok(())
    }
}

/// A finished fit: the ensemble plus per-iteration instrumentation series,
/// all of length `total_iters` (burn-in included).
#[derive(Debug, Clone)]
pub struct FitReport {
    pub ensemble: PosteriorEnsemble,
    pub per_iter_accept_rate: Vec<f64>,
    pub per_iter_avg_depth: Vec<f64>,
    pub per_iter_avg_nodes: Vec<f64>,
    pub sigma_trace: Vec<f64>,
}

/// Chooses the Inverse-Gamma scale so the sigma^2 prior puts probability `q`
/// below `sd_hat^2` (the squared sample sd of the rescaled response).
pub fn calibrate_lambda(sd_hat: f64, nu: f64, q: f64) -> f64 {
    let gamma = statrs::distribution::Gamma::new(nu / 2.0, 1.0).expect("valid gamma");
    let u = gamma.inverse_cdf(1.0 - q);
    2.0 * sd_hat * sd_hat * u / nu
}

/// Spec-shaped proposal entry point; the chain uses the same machinery
/// internally.
pub fn propose_move<R: Rng>(
    tree: &TreeDraw,
    data: &Dataset,
    probs: &MoveProbs,
    rng: &mut R,
) -> Result<(TreeDraw, MoveKind, f64)> {
    let p = moves::propose(&tree.nodes, data, probs, rng)?;
    let draw = TreeDraw::new(
        p.nodes,
        tree.tree_index,
        tree.iteration,
        Proposal { kind: p.kind, accepted: false },
    );
    Ok((draw, p.kind, p.log_correction))
}

pub fn fit_regression(data: &Dataset, cfg: &SamplerConfig) -> Result<FitReport> {
    cfg.validate()?;
    check_splittable(data)?;
    let y = data.y();
    let (ymin, ymax) = min_max(y);
    if ymax <= ymin {
        return Err(Error::Rescaling("response is constant".into()));
    }
    let y_center = 0.5 * (ymin + ymax);
    let y_scale = ymax - ymin;
    let y_int: Vec<f64> = y.iter().map(|v| (v - y_center) / y_scale).collect();
    let sigma_mu = 0.5 / (cfg.kappa * (cfg.m as f64).sqrt());
    let sd_hat = sample_sd(&y_int);
    let lambda = calibrate_lambda(sd_hat, cfg.nu, cfg.q);
    run_chain(data, cfg, Scale { y_center, y_scale }, sigma_mu, ChainKind::Regression {
        y_int,
        lambda,
        sigma_init: sd_hat,
    })
}

pub fn fit_classification(data: &Dataset, cfg: &SamplerConfig) -> Result<FitReport> {
    cfg.validate()?;
    check_splittable(data)?;
    let y = data.y();
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::DegenerateResponse(
            "classification requires a 0/1 response".into(),
        ));
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::DegenerateResponse("response contains a single class".into()));
    }
    let sigma_mu = 3.0 / (cfg.kappa * (cfg.m as f64).sqrt());
    run_chain(
        data,
        cfg,
        Scale { y_center: 0.0, y_scale: 1.0 },
        sigma_mu,
        ChainKind::Classification { y: y.to_vec() },
    )
}

struct Scale {
    y_center: f64,
    y_scale: f64,
}

enum ChainKind {
    Regression { y_int: Vec<f64>, lambda: f64, sigma_init: f64 },
    Classification { y: Vec<f64> },
}

fn run_chain(data: &Dataset, cfg: &SamplerConfig, scale: Scale, sigma_mu: f64, kind: ChainKind) -> Result<FitReport> {
    let n = data.n();
    let m = cfg.m;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let std_normal = statrs::distribution::Normal::new(0.0, 1.0).expect("standard normal");

    let mut trees: Vec<Vec<TreeNode>> = (0..m)
        .map(|_| {
            vec![TreeNode {
                id: 0,
                parent: None,
                left: None,
                right: None,
                split_var: None,
                split_value: None,
                mu: Some(0.0),
                depth: 0,
            }]
        })
        .collect();
    let mut fits: Vec<Vec<f64>> = vec![vec![0.0; n]; m];
    let mut fullfit = vec![0.0; n];

    let (task, mut sigma_int) = match &kind {
        ChainKind::Regression { sigma_init, .. } => (Task::Regression, *sigma_init),
        ChainKind::Classification { .. } => (Task::BinaryClassification, 1.0),
    };

    let mut iterations: Vec<IterationDraw> = Vec::with_capacity(cfg.total_iters);
    let mut fitted: Vec<Vec<f64>> = Vec::with_capacity(cfg.total_iters - cfg.burn_in);
    let mut accept_rate = Vec::with_capacity(cfg.total_iters);
    let mut avg_depth = Vec::with_capacity(cfg.total_iters);
    let mut avg_nodes = Vec::with_capacity(cfg.total_iters);
    let mut sigma_trace = Vec::with_capacity(cfg.total_iters);
    let mut latent = vec![0.0; n];

    for k in 0..cfg.total_iters {
        // Latent response draw for probit classification.
        let target: &[f64] = match &kind {
            ChainKind::Regression { y_int, .. } => y_int,
            ChainKind::Classification { y } => {
                for i in 0..n {
                    let f = fullfit[i];
                    let p0 = std_normal.cdf(-f); // P(z <= 0 | f)
                    let u: f64 = rng.gen();
                    let arg = if y[i] == 1.0 { p0 + u * (1.0 - p0) } else { u * p0 };
                    let arg = arg.clamp(1e-300, 1.0 - 1e-16);
                    latent[i] = f + std_normal.inverse_cdf(arg);
                }
                &latent
            }
        };

        let mut drawn: Vec<TreeDraw> = Vec::with_capacity(m);
        for j in 0..m {
            // Partial residuals against every other tree's fit.
            let resid: Vec<f64> = (0..n).map(|i| target[i] - fullfit[i] + fits[j][i]).collect();

            let proposal = moves::propose(&trees[j], data, &cfg.move_probs, &mut rng)?;
            let cur_rows = route_nodes(&trees[j], data)?;
            let cand_rows = route_nodes(&proposal.nodes, data)?;

            let cur_ll = log_marginal_from_stats(&terminal_stats(&trees[j], &cur_rows, &resid), sigma_int, sigma_mu);
            let cand_ll =
                log_marginal_from_stats(&terminal_stats(&proposal.nodes, &cand_rows, &resid), sigma_int, sigma_mu);
            let cur_prior = log_tree_prior(&trees[j], cfg.alpha, cfg.beta);
            let cand_prior = log_tree_prior(&proposal.nodes, cfg.alpha, cfg.beta);
            let log_alpha = cand_ll - cur_ll + cand_prior - cur_prior + proposal.log_correction;

            let u: f64 = rng.gen();
            let accepted = u.ln() < log_alpha;
            let (kind_used, rows) = if accepted {
                trees[j] = proposal.nodes;
                (proposal.kind, cand_rows)
            } else {
                (proposal.kind, cur_rows)
            };

            // Redraw every leaf value from its conditional normal posterior.
            for id in 0..trees[j].len() {
                if trees[j][id].is_terminal() {
                    let (cnt, sum) = rows[id]
                        .iter()
                        .fold((0usize, 0.0), |(c, s), &i| (c + 1, s + resid[i]));
                    let prec = cnt as f64 / (sigma_int * sigma_int) + 1.0 / (sigma_mu * sigma_mu);
                    let post_var = 1.0 / prec;
                    let post_mean = (sum / (sigma_int * sigma_int)) * post_var;
                    let draw = rand_distr::Normal::new(post_mean, post_var.sqrt())
                        .expect("finite leaf posterior")
                        .sample(&mut rng);
                    trees[j][id].mu = Some(draw);
                }
            }

            // Refresh this tree's fit vector and the running total.
            let mut new_fit = vec![0.0; n];
            for id in 0..trees[j].len() {
                if let Some(mu) = trees[j][id].mu {
                    for &i in &rows[id] {
                        new_fit[i] = mu;
                    }
                }
            }
            for i in 0..n {
                fullfit[i] += new_fit[i] - fits[j][i];
            }
            fits[j] = new_fit;

            drawn.push(TreeDraw::new(
                trees[j].clone(),
                j,
                k,
                Proposal { kind: kind_used, accepted },
            ));
        }

        // Re-sum the per-tree fits in index order so the recorded fit is
        // exactly reproducible by summing tree predictions.
        for i in 0..n {
            let mut s = 0.0;
            for fit in fits.iter() {
                s += fit[i];
            }
            fullfit[i] = s;
        }

        let (sigma_orig, latent_sd) = match &kind {
            ChainKind::Regression { y_int, lambda, .. } => {
                let ssr: f64 = (0..n).map(|i| (y_int[i] - fullfit[i]).powi(2)).sum();
                let shape = (cfg.nu + n as f64) / 2.0;
                let scale_param = (cfg.nu * lambda + ssr) / 2.0;
                let g = rand_distr::Gamma::new(shape, 1.0)
                    .expect("valid gamma")
                    .sample(&mut rng);
                sigma_int = (scale_param / g).sqrt();
                (sigma_int * scale.y_scale, None)
            }
            ChainKind::Classification { .. } => {
                let ssr: f64 = (0..n).map(|i| (target[i] - fullfit[i]).powi(2)).sum();
                (1.0, Some((ssr / n as f64).sqrt()))
            }
        };

        accept_rate.push(drawn.iter().filter(|t| t.proposal.accepted).count() as f64 / m as f64);
        avg_depth.push(drawn.iter().map(|t| t.depth() as f64).sum::<f64>() / m as f64);
        avg_nodes.push(drawn.iter().map(|t| t.node_count() as f64).sum::<f64>() / m as f64);
        sigma_trace.push(sigma_orig);

        if k >= cfg.burn_in {
            let values: Vec<f64> = match task {
                Task::Regression => fullfit.iter().map(|f| f * scale.y_scale + scale.y_center).collect(),
                Task::BinaryClassification => fullfit.iter().map(|f| std_normal.cdf(*f)).collect(),
            };
            fitted.push(values);
        }
        iterations.push(IterationDraw::new(drawn, sigma_orig, latent_sd));
    }

    let ensemble = PosteriorEnsemble {
        iterations,
        burn_in: cfg.burn_in,
        m,
        task,
        schema: DatasetSchema::of(data),
        y_center: scale.y_center,
        y_scale: scale.y_scale,
        fitted,
    };
    Ok(FitReport {
        ensemble,
        per_iter_accept_rate: accept_rate,
        per_iter_avg_depth: avg_depth,
        per_iter_avg_nodes: avg_nodes,
        sigma_trace,
    })
}

fn terminal_stats(nodes: &[TreeNode], rows: &[Vec<usize>], resid: &[f64]) -> Vec<LeafStats> {
    nodes
        .iter()
        .filter(|n| n.is_terminal())
        .map(|n| {
            let mut stats = LeafStats { n: 0, sum: 0.0, sumsq: 0.0 };
            for &i in &rows[n.id] {
                stats.n += 1;
                stats.sum += resid[i];
                stats.sumsq += resid[i] * resid[i];
            }
            stats
        })
        .collect()
}

fn check_splittable(data: &Dataset) -> Result<()> {
    let splittable = (0..data.p()).any(|j| {
        let col = data.column(j);
        col.iter().any(|&v| v != col[0])
    });
    if splittable {
        Ok(())
    } else {
        Err(Error::NoValidSplit)
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::testutil::numeric_dataset;
    use rand::Rng;

    fn uniform_cols(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..p).map(|_| (0..n).map(|_| rng.gen::<f64>()).collect()).collect()
    }

    #[test]
    fn config_validation() {
        let mut cfg = SamplerConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.alpha = 2.0;
        assert!(cfg.validate().is_err());
        cfg = SamplerConfig { burn_in: 10, total_iters: 10, ..SamplerConfig::default() };
        assert!(cfg.validate().is_err());
        cfg = SamplerConfig::default();
        cfg.move_probs.grow = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn constant_response_is_a_rescaling_error() {
        let data = numeric_dataset(uniform_cols(10, 2, 1), vec![3.0; 10]);
        let err = fit_regression(&data, &SamplerConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Rescaling(_)));
    }

    #[test]
    fn unsplittable_data_is_rejected() {
        let data = numeric_dataset(vec![vec![1.0; 6], vec![2.0; 6]], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let err = fit_regression(&data, &SamplerConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NoValidSplit));
    }

    #[test]
    fn single_class_response_is_degenerate() {
        let data = numeric_dataset(uniform_cols(10, 2, 2), vec![1.0; 10]);
        let err = fit_classification(&data, &SamplerConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateResponse(_)));
    }

    #[test]
    fn lambda_calibration_places_q_below_sd_hat() {
        // P(sigma^2 < sd_hat^2) under InvGamma(nu/2, nu lambda / 2) must be q.
        let (sd_hat, nu, q) = (0.27, 3.0, 0.90);
        let lambda = calibrate_lambda(sd_hat, nu, q);
        let gamma = statrs::distribution::Gamma::new(nu / 2.0, 1.0).unwrap();
        // P(X < t) = P(G > b/t) for X = b/G.
        let b = nu * lambda / 2.0;
        let p = 1.0 - gamma.cdf(b / (sd_hat * sd_hat));
        assert!((p - q).abs() < 1e-9, "calibrated prior mass {p}");
    }

    #[test]
    fn reproducible_fits_are_bit_identical() {
        let data = numeric_dataset(uniform_cols(30, 3, 3), {
            let mut rng = ChaCha20Rng::seed_from_u64(9);
            (0..30).map(|_| rng.gen::<f64>() * 4.0).collect()
        });
        let cfg = SamplerConfig { total_iters: 50, burn_in: 10, m: 5, seed: 77, ..SamplerConfig::default() };
        let a = fit_regression(&data, &cfg).unwrap();
        let b = fit_regression(&data, &cfg).unwrap();
        assert_eq!(a.sigma_trace.len(), b.sigma_trace.len());
        for (x, y) in a.sigma_trace.iter().zip(&b.sigma_trace) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (u, v) in a.ensemble.fitted.iter().zip(&b.ensemble.fitted) {
            for (x, y) in u.iter().zip(v) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn accept_rate_matches_accepted_count() {
        let data = numeric_dataset(uniform_cols(25, 2, 4), {
            let mut rng = ChaCha20Rng::seed_from_u64(5);
            (0..25).map(|_| rng.gen::<f64>()).collect()
        });
        let cfg = SamplerConfig { total_iters: 40, burn_in: 5, m: 4, seed: 1, ..SamplerConfig::default() };
        let fit = fit_regression(&data, &cfg).unwrap();
        for (k, it) in fit.ensemble.iterations.iter().enumerate() {
            assert_eq!(fit.per_iter_accept_rate[k], it.accepted_count as f64 / cfg.m as f64);
        }
        assert_eq!(fit.per_iter_accept_rate.len(), cfg.total_iters);
        assert_eq!(fit.sigma_trace.len(), cfg.total_iters);
    }

    #[test]
    fn recorded_fit_equals_sum_of_tree_predictions() {
        let data = numeric_dataset(uniform_cols(20, 2, 6), {
            let mut rng = ChaCha20Rng::seed_from_u64(8);
            (0..20).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
        });
        let cfg = SamplerConfig { total_iters: 30, burn_in: 3, m: 6, seed: 13, ..SamplerConfig::default() };
        let fit = fit_regression(&data, &cfg).unwrap();
        let e = &fit.ensemble;
        for (ki, it) in e.retained().iter().enumerate() {
            for i in 0..data.n() {
                let x = data.row(i);
                let mut s = 0.0;
                for t in &it.trees {
                    s += t.predict(&x);
                }
                let rec = e.fitted[ki][i];
                let expect = s * e.y_scale + e.y_center;
                assert!((rec - expect).abs() <= 1e-10, "drift {} at iter {ki} row {i}", rec - expect);
            }
        }
    }

    #[test]
    fn noise_free_linear_signal_is_learned() {
        let n = 60;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let y = x.clone(); // y == x1 with zero noise
        let data = numeric_dataset(vec![x], y.clone());
        let cfg = SamplerConfig { m: 50, total_iters: 400, burn_in: 100, seed: 4, ..SamplerConfig::default() };
        let fit = fit_regression(&data, &cfg).unwrap();
        let mean = fit.ensemble.fitted_mean();
        let rmse = (y.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64).sqrt();
        let sd_y = sample_sd(&y);
        assert!(rmse < 0.1 * sd_y, "training rmse {rmse} vs sd {sd_y}");
    }

    #[test]
    fn separable_classification_reaches_high_accuracy() {
        let n = 60;
        let x: Vec<f64> = (0..n).map(|i| i as f64 - (n / 2) as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| (v > 0.0) as u8 as f64).collect();
        let data = numeric_dataset(vec![x], y.clone());
        let cfg = SamplerConfig { m: 20, total_iters: 300, burn_in: 100, seed: 2, ..SamplerConfig::default() };
        let fit = fit_classification(&data, &cfg).unwrap();
        let probs = fit.ensemble.fitted_mean();
        let correct = probs
            .iter()
            .zip(&y)
            .filter(|(p, y)| (**p >= 0.5) == (**y == 1.0))
            .count();
        assert!(correct as f64 / n as f64 >= 0.95, "accuracy {}", correct as f64 / n as f64);
        for it in fit.ensemble.iterations.iter() {
            assert_eq!(it.sigma, 1.0);
            assert!(it.latent_resid_sd.is_some());
        }
    }
}
