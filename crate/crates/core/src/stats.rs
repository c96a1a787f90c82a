//! Small statistics helpers: least squares with bootstrap intervals,
//! Kolmogorov–Smirnov distance, quantiles, mean/standard error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::special::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% residual-bootstrap interval for the slope.
    pub slope_ci: (f64, f64),
    pub r_squared: f64,
    pub n: usize,
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = pairwise_sum(x) / n;
    let my = pairwise_sum(y) / n;
    let sxy: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let sxx: Vec<f64> = x.iter().map(|a| (a - mx) * (a - mx)).collect();
    let slope = pairwise_sum(&sxy) / pairwise_sum(&sxx);
    (slope, my - slope * mx)
}

/// Ordinary least squares `y ≈ slope·x + intercept` with a residual
/// bootstrap (`resamples` draws, deterministic in `seed`).
pub fn linear_fit(x: &[f64], y: &[f64], resamples: usize, seed: u64) -> LinearFit {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "need at least two points");
    let (slope, intercept) = ols(x, y);
    let fitted: Vec<f64> = x.iter().map(|v| slope * v + intercept).collect();
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let my = pairwise_sum(y) / y.len() as f64;
    let ss_res = pairwise_sum(&resid.iter().map(|r| r * r).collect::<Vec<_>>());
    let ss_tot = pairwise_sum(&y.iter().map(|v| (v - my) * (v - my)).collect::<Vec<_>>());
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes = Vec::with_capacity(resamples);
    let mut yb = vec![0.0; y.len()];
    for _ in 0..resamples {
        for (i, slot) in yb.iter_mut().enumerate() {
            *slot = fitted[i] + resid[rng.random_range(0..resid.len())];
        }
        slopes.push(ols(x, &yb).0);
    }
    let slope_ci = if slopes.is_empty() {
        (slope, slope)
    } else {
        slopes.sort_by(f64::total_cmp);
        (
            quantile_sorted(&slopes, 0.025),
            quantile_sorted(&slopes, 0.975),
        )
    };
    LinearFit {
        slope,
        intercept,
        slope_ci,
        r_squared,
        n: x.len(),
    }
}

/// Linear-interpolated quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Sample mean and standard error `std/sqrt(n)`.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// KS distance between sorted samples and a model CDF evaluated at them.
pub fn ks_distance(sorted: &[f64], cdf_at_samples: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &f) in cdf_at_samples.iter().enumerate() {
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_zero_width_interval() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let fit = linear_fit(&x, &y, 50, 7);
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-10);
        assert!((fit.slope_ci.1 - fit.slope_ci.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_is_seed_deterministic() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v + (v * 1.7).sin()).collect();
        assert_eq!(linear_fit(&x, &y, 200, 1), linear_fit(&x, &y, 200, 1));
    }

    #[test]
    fn ks_of_perfect_uniform_grid() {
        let s: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_distance(&s, &s) - 0.005).abs() < 1e-12);
    }
}
