//! Small numeric helpers shared by the analytics and rendering code.

use statrs::distribution::ContinuousCDF;

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile (R type 7) of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&v, p)
}

/// Posterior summary of one scalar quantity's draws.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub sd: f64,
    /// Coefficient of variation sd/mean; +inf when the mean is 0, so a
    /// never-used quantity lands in the most-uncertain bin downstream.
    pub cv: f64,
}

pub fn summarize(draws: &[f64]) -> Summary {
    if draws.is_empty() {
        return Summary { mean: 0.0, median: 0.0, q25: 0.0, q75: 0.0, sd: 0.0, cv: f64::INFINITY };
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = mean(draws);
    let sd = sample_sd(draws);
    Summary {
        mean: m,
        median: quantile_sorted(&sorted, 0.5),
        q25: quantile_sorted(&sorted, 0.25),
        q75: quantile_sorted(&sorted, 0.75),
        sd,
        cv: if m == 0.0 { f64::INFINITY } else { sd / m },
    }
}

pub fn norm_cdf(x: f64) -> f64 {
    statrs::distribution::Normal::new(0.0, 1.0).expect("standard normal").cdf(x)
}

pub fn norm_quantile(p: f64) -> f64 {
    statrs::distribution::Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(p.clamp(1e-300, 1.0 - 1e-16))
}

/// Silverman's rule-of-thumb bandwidth.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return 0.0;
    }
    let sd = sample_sd(samples);
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian kernel density estimate on a fixed grid, normalized so the
/// trapezoid integral over the grid is 1.
pub fn gaussian_kde(samples: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut h = silverman_bandwidth(samples);
    if h <= 0.0 {
        // Degenerate sample (e.g. every split at one value): fall back to a
        // narrow kernel relative to the grid span.
        let span = grid.last().copied().unwrap_or(1.0) - grid.first().copied().unwrap_or(0.0);
        h = if span > 0.0 { span / 100.0 } else { 1e-3 };
    }
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * samples.len() as f64);
    let mut dens: Vec<f64> = grid
        .iter()
        .map(|&g| {
            samples
                .iter()
                .map(|&s| {
                    let z = (g - s) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    let integral = trapezoid(grid, &dens);
    if integral > 0.0 {
        dens.iter_mut().for_each(|d| *d /= integral);
    }
    dens
}

pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Area under the ROC curve by the Mann-Whitney statistic with tie handling.
pub fn auc(labels: &[f64], scores: &[f64]) -> f64 {
    let mut pos = 0usize;
    let mut neg = 0usize;
    for &l in labels {
        if l == 1.0 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    if pos == 0 || neg == 0 {
        return 0.5;
    }
    let mut sum = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1.0 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] == 1.0 {
                continue;
            }
            sum += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    sum / (pos * neg) as f64
}

/// Ordinary least squares line; returns (slope, intercept).
pub fn ols_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(xs), mean(ys));
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx).powi(2);
    }
    if den == 0.0 {
        (0.0, my)
    } else {
        (num / den, my - num / den * mx)
    }
}

/// Locally weighted regression (tricube weights, local linear fit) evaluated
/// at every input point.
pub fn loess(xs: &[f64], ys: &[f64], span: f64) -> Vec<f64> {
    let n = xs.len();
    if n == 0 {
        return Vec::new();
    }
    let window = ((span * n as f64).ceil() as usize).clamp(2, n);
    let mut fitted = Vec::with_capacity(n);
    for i in 0..n {
        let x0 = xs[i];
        // Nearest `window` points by |x - x0|.
        let mut dists: Vec<(f64, usize)> = xs.iter().map(|&x| (x - x0).abs()).zip(0..n).collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let neighbors = &dists[..window];
        let dmax = neighbors.last().unwrap().0.max(f64::MIN_POSITIVE);
        let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(d, j) in neighbors {
            let t = (d / dmax).min(1.0);
            let w = (1.0 - t * t * t).powi(3);
            let (x, y) = (xs[j], ys[j]);
            sw += w;
            swx += w * x;
            swy += w * y;
            swxx += w * x * x;
            swxy += w * x * y;
        }
        let den = sw * swxx - swx * swx;
        let value = if den.abs() < 1e-12 {
            if sw > 0.0 {
                swy / sw
            } else {
                ys[i]
            }
        } else {
            let slope = (sw * swxy - swx * swy) / den;
            let intercept = (swy - slope * swx) / sw;
            intercept + slope * x0
        };
        fitted.push(value);
    }
    fitted
}

/// Histogram with `bins` equal-width bins over [min, max]; returns
/// (break points of length bins+1, counts of length bins).
pub fn histogram(values: &[f64], bins: usize) -> (Vec<f64>, Vec<usize>) {
    let bins = bins.max(1);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (vec![0.0, 1.0], vec![0; bins]);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let breaks: Vec<f64> = (0..=bins).map(|b| lo + width * b as f64).collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    (breaks, counts)
}

pub fn sturges_bins(n: usize) -> usize {
    ((n as f64).log2().ceil() as usize + 1).max(1)
}
