//! Small numerical and testing toolkit shared by the estimators.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn excludes_zero(&self) -> bool {
        self.lo > 0.0 || self.hi < 0.0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn std_err(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(x: &[f64], q: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] * (1.0 - frac) + v[i + 1] * frac
    } else {
        v[i]
    }
}

/// Percentile bootstrap over resampled index sets.
pub fn bootstrap_indices<F>(n: usize, resamples: usize, level: f64, seed: u64, mut stat: F) -> Interval
where
    F: FnMut(&[usize]) -> f64,
{
    let mut r = rng::stream(seed, rng::AUX_STREAM_BASE + 7);
    let mut idx = vec![0usize; n];
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for slot in idx.iter_mut() {
            *slot = r.random_range(0..n);
        }
        let v = stat(&idx);
        if v.is_finite() {
            values.push(v);
        }
    }
    values.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    Interval { lo: quantile_sorted(&values, a), hi: quantile_sorted(&values, 1.0 - a) }
}

pub fn bootstrap_ci<F>(data: &[f64], stat: F, resamples: usize, level: f64, seed: u64) -> Interval
where
    F: Fn(&[f64]) -> f64,
{
    let mut buf = vec![0.0; data.len()];
    bootstrap_indices(data.len(), resamples, level, seed, |idx| {
        for (b, &i) in buf.iter_mut().zip(idx) {
            *b = data[i];
        }
        stat(&buf)
    })
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(successes: u64, n: u64, z: f64) -> Interval {
    if n == 0 {
        return Interval { lo: 0.0, hi: 1.0 };
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    Interval { lo: (centre - half).max(0.0), hi: (centre + half).min(1.0) }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    /// Asymptotic critical value at the 1% level.
    pub critical_1pct: f64,
}

impl KsResult {
    pub fn rejects(&self) -> bool {
        self.statistic > self.critical_1pct
    }
}

/// Two-sample Kolmogorov–Smirnov distance with its 1% critical value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    KsResult { statistic: d, critical_1pct: 1.628 * ((nf + mf) / (nf * mf)).sqrt() }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdResult {
    /// Small-sample corrected statistic `A^2 (1 + 0.75/n + 2.25/n^2)`.
    pub statistic: f64,
    pub critical_1pct: f64,
}

impl AdResult {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical_1pct
    }
}

/// Anderson–Darling normality test with mean and variance estimated.
pub fn anderson_darling_normal(x: &[f64]) -> AdResult {
    let n = x.len();
    let m = mean(x);
    let s = variance(x).sqrt();
    let mut z: Vec<f64> = x.iter().map(|v| (v - m) / s).collect();
    z.sort_by(f64::total_cmp);
    let norm = Normal::new(0.0, 1.0).expect("standard normal");
    let nf = n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let fi = norm.cdf(z[i]).clamp(1e-300, 1.0 - 1e-16);
        let fr = norm.cdf(z[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        acc += (2.0 * (i as f64) + 1.0) * (fi.ln() + (1.0 - fr).ln());
    }
    let a2 = -nf - acc / nf;
    AdResult { statistic: a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf)), critical_1pct: 1.035 }
}

pub fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let m = mean(x);
    let den: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    num / den
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_se: f64,
}

/// Ordinary least squares, optionally weighted.
pub fn linear_fit(x: &[f64], y: &[f64], w: Option<&[f64]>) -> LinearFit {
    let n = x.len();
    let ones = vec![1.0; n];
    let w = w.unwrap_or(&ones);
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
        syy += w[i] * (y[i] - my) * (y[i] - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = (0..n).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let dof = n.saturating_sub(2).max(1) as f64;
    let slope_se = (sse / dof / sxx).sqrt();
    LinearFit { slope, intercept, r2, slope_se }
}

/// Total variation distance between two probability vectors keyed by outcome.
pub fn tv_distance<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut d = 0.0;
    for (k, &pa) in a {
        d += (pa - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &pb) in b {
        if !a.contains_key(k) {
            d += pb.abs();
        }
    }
    0.5 * d
}

/// Empirical survival `P[X > t]` on a grid; infinite values count as surviving.
pub fn survival_curve(samples: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    grid.iter().map(|&t| (v.len() - v.partition_point(|&s| s <= t)) as f64 / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert!((variance(&x) - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(quantile(&x, 0.5), 2.5);
    }

    #[test]
    fn wilson_matches_formula() {
        let ci = wilson(50, 100, 1.96);
        assert!((ci.lo - 0.4038).abs() < 1e-3 && (ci.hi - 0.5962).abs() < 1e-3);
        let zero = wilson(0, 100, 1.96);
        assert_eq!(zero.lo, 0.0);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..500).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&a, &a).statistic, 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + 250.0).collect();
        let r = ks_two_sample(&a, &b);
        assert!((r.statistic - 0.5).abs() < 1e-12);
        assert!(r.rejects());
    }

    #[test]
    fn anderson_darling_on_normal_quantiles() {
        let norm = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (1..=200).map(|i| norm.inverse_cdf(i as f64 / 201.0)).collect();
        assert!(anderson_darling_normal(&x).passes());
        let skewed: Vec<f64> = (1..=200).map(|i| (i as f64 / 20.0).exp()).collect();
        assert!(!anderson_darling_normal(&skewed).passes());
    }

    #[test]
    fn perfect_line() {
        let x = [1.0, 2.0, 3.0];
        let y = [3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y, None);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tv_is_symmetric_and_bounded() {
        let a = BTreeMap::from([(0, 0.5), (1, 0.5)]);
        let b = BTreeMap::from([(1, 0.25), (2, 0.75)]);
        assert_eq!(tv_distance(&a, &a), 0.0);
        assert_eq!(tv_distance(&a, &b), tv_distance(&b, &a));
        assert!((tv_distance(&a, &b) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_mean_covers_truth() {
        let x: Vec<f64> = (0..400).map(|i| (i % 10) as f64).collect();
        let ci = bootstrap_ci(&x, mean, 500, 0.95, 3);
        assert!(ci.contains(4.5));
    }

    #[test]
    fn survival_counts_strict_exceedance() {
        let s = survival_curve(&[1.0, 2.0, f64::INFINITY], &[0.0, 1.0, 5.0]);
        assert_eq!(s, vec![1.0, 2.0 / 3.0, 1.0 / 3.0]);
    }
}
