//! Summation, sample moments, least squares and percentile bootstrap.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;

/// Pairwise (cascade) summation in index order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        return xs.iter().fold(0.0, |a, &b| a + b);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    /// Widens the interval so that it contains `x`.
    pub fn including(self, x: f64) -> Self {
        Self { lo: self.lo.min(x), hi: self.hi.max(x) }
    }
}

/// Percentile bootstrap over sample indices.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Bootstrap {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Bootstrap {
    pub const DEFAULT_RESAMPLES: usize = 1000;

    pub fn new(master_seed: u64) -> Self {
        Self {
            resamples: Self::DEFAULT_RESAMPLES,
            level: 0.95,
            seed: seed::derive_seed(master_seed, seed::stream::BOOTSTRAP),
        }
    }

    /// Resamples `n` indices with replacement and evaluates `stat` on each draw.
    pub fn interval<F>(&self, n: usize, stat: F) -> Interval
    where
        F: Fn(&[usize]) -> f64,
    {
        if n == 0 {
            return Interval { lo: f64::NAN, hi: f64::NAN };
        }
        let mut rng = seed::rng(self.seed);
        let mut idx = vec![0usize; n];
        let mut draws: Vec<f64> = (0..self.resamples)
            .map(|_| {
                idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
                stat(&idx)
            })
            .filter(|v| !v.is_nan())
            .collect();
        draws.sort_by(f64::total_cmp);
        let tail = 0.5 * (1.0 - self.level);
        Interval { lo: quantile_sorted(&draws, tail), hi: quantile_sorted(&draws, 1.0 - tail) }
    }

    /// Interval for the mean of `xs`.
    pub fn mean_interval(&self, xs: &[f64]) -> Interval {
        self.interval(xs.len(), |idx| {
            let picked: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
            mean(&picked)
        })
    }
}
