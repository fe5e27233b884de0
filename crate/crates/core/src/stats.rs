//! Statistical verification primitives shared by the process modules.
//!
//! All procedures are deterministic given their inputs and, for the
//! permutation test, a seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::core::{hash_key, unit_f64};

/// Errors from the statistical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("sample too small: {0}")]
    TooSmall(String),
    #[error("mean cycle length is zero")]
    ZeroMeanGap,
    #[error("length mismatch: {0} vs {1}")]
    Mismatch(usize, usize),
}

/// Outcome of a hypothesis test at a declared level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n_samples: usize,
    pub alpha: f64,
    pub reject: bool,
}

impl TestReport {
    fn new(name: &str, statistic: f64, p_value: f64, n_samples: usize, alpha: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self { name: name.to_string(), statistic, p_value, n_samples, alpha, reject: p_value < alpha }
    }
}

/// Kolmogorov distribution tail `Q(λ) = 2 Σ (-1)^{k-1} exp(-2 k² λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut prev_term = 0.0f64;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term <= 1e-12 * sum.abs() || (term < 1e-300 && prev_term < 1e-300) {
            return (2.0 * sum).clamp(0.0, 1.0);
        }
        sign = -sign;
        prev_term = term;
    }
    1.0
}

/// Exact two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Two-sample KS test with the Stephens small-sample correction of the
/// asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<TestReport, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::Empty);
    }
    let d = ks_statistic(a, b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let en = (na * nb / (na + nb)).sqrt();
    let p = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    Ok(TestReport::new("ks_two_sample", d, p, a.len() + b.len(), alpha))
}

/// Standardize each column of a feature matrix to mean 0 and variance 1.
fn standardize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;
    let mut out = rows.to_vec();
    for c in 0..dim {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for r in &mut out {
            r[c] = (r[c] - mean) / sd;
        }
    }
    out
}

/// Double-centered Euclidean distance matrix, row-major.
fn centered_distances(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = rows[i].iter().zip(&rows[j]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
    }
    let row_means: Vec<f64> = (0..n).map(|i| d[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }
    d
}

fn dcov_sum(a: &[f64], b: &[f64], perm: &[usize]) -> f64 {
    let n = perm.len();
    let mut total = 0.0;
    for i in 0..n {
        let row_a = &a[i * n..(i + 1) * n];
        let row_b = &b[perm[i] * n..(perm[i] + 1) * n];
        let mut acc = 0.0;
        for j in 0..n {
            acc += row_a[j] * row_b[perm[j]];
        }
        total += acc;
    }
    total
}

/// Distance correlation between paired feature vectors.
pub fn distance_correlation(u: &[Vec<f64>], v: &[Vec<f64>]) -> f64 {
    let a = centered_distances(&standardize(u));
    let b = centered_distances(&standardize(v));
    let id: Vec<usize> = (0..u.len()).collect();
    let xy = dcov_sum(&a, &b, &id);
    let xx = dcov_sum(&a, &a, &id);
    let yy = dcov_sum(&b, &b, &id);
    if xx <= 0.0 || yy <= 0.0 {
        0.0
    } else {
        (xy.max(0.0) / (xx * yy).sqrt()).sqrt()
    }
}

/// Permutation test of independence between paired feature vectors using
/// the distance-covariance statistic against `permutations` random relabelings.
pub fn permutation_independence(
    u: &[Vec<f64>],
    v: &[Vec<f64>],
    permutations: usize,
    seed: u64,
    alpha: f64,
) -> Result<TestReport, StatsError> {
    if u.len() != v.len() {
        return Err(StatsError::Mismatch(u.len(), v.len()));
    }
    if u.len() < 4 {
        return Err(StatsError::TooSmall(format!("{} pairs", u.len())));
    }
    let n = u.len();
    let a = centered_distances(&standardize(u));
    let b = centered_distances(&standardize(v));
    let id: Vec<usize> = (0..n).collect();
    let observed = dcov_sum(&a, &b, &id);
    let tol = 1e-12 * observed.abs().max(1e-300);
    let exceed: usize = (0..permutations)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut perm = id.clone();
            perm.shuffle(&mut rng);
            usize::from(dcov_sum(&a, &b, &perm) >= observed - tol)
        })
        .sum();
    let p = (1 + exceed) as f64 / (permutations + 1) as f64;
    Ok(TestReport::new("permutation_independence", observed / (n * n) as f64, p, n, alpha))
}

/// Scalar convenience wrapper around [`permutation_independence`].
pub fn permutation_independence_scalar(
    pairs: &[(f64, f64)],
    permutations: usize,
    seed: u64,
    alpha: f64,
) -> Result<TestReport, StatsError> {
    let u: Vec<Vec<f64>> = pairs.iter().map(|p| vec![p.0]).collect();
    let v: Vec<Vec<f64>> = pairs.iter().map(|p| vec![p.1]).collect();
    permutation_independence(&u, &v, permutations, seed, alpha)
}

/// Geometric tail fit of a nonnegative integer sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    pub k_lo: u64,
    pub k_hi: u64,
}

/// Minimum number of exceedances a tail index needs to enter the fit.
pub const TAIL_MIN_EXCEEDANCES: usize = 30;

/// Least-squares fit of `ln P(X > k) ≈ c - α k` over the upper tail, from
/// the sample median up to the last `k` with at least 30 exceedances.
pub fn geometric_tail_fit(sample: &[u64]) -> Result<TailFit, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let k_lo = sorted[(n - 1) / 2];
    let exceed = |k: u64| n - sorted.partition_point(|&x| x <= k);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut k = k_lo;
    loop {
        let e = exceed(k);
        if e < TAIL_MIN_EXCEEDANCES {
            break;
        }
        xs.push(k as f64);
        ys.push((e as f64 / n as f64).ln());
        k += 1;
    }
    if xs.len() < 2 {
        return Err(StatsError::TooSmall(format!(
            "fewer than {TAIL_MIN_EXCEEDANCES} tail exceedances beyond two tail indices"
        )));
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(TailFit {
        rate: -slope,
        intercept: my - slope * mx,
        r_squared,
        points: xs.len(),
        k_lo,
        k_hi: k - 1,
    })
}

/// Renewal-reward rate estimate with a delta-method confidence interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub std_error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub cycles: usize,
}

impl RateEstimate {
    /// True when the two intervals intersect.
    pub fn overlaps(&self, other: &RateEstimate) -> bool {
        self.ci_lo <= other.ci_hi && other.ci_lo <= self.ci_hi
    }
}

/// Two-sided standard normal quantile for a confidence level.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + level / 2.0)
}

/// `μ̂ = mean(rewards) / mean(gaps)` with a delta-method interval at `level`.
pub fn renewal_reward(gaps: &[f64], rewards: &[f64], level: f64) -> Result<RateEstimate, StatsError> {
    if gaps.len() != rewards.len() {
        return Err(StatsError::Mismatch(gaps.len(), rewards.len()));
    }
    if gaps.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = gaps.len() as f64;
    let mg = gaps.iter().sum::<f64>() / n;
    if mg == 0.0 {
        return Err(StatsError::ZeroMeanGap);
    }
    let mr = rewards.iter().sum::<f64>() / n;
    let rate = mr / mg;
    let resid_var = if gaps.len() > 1 {
        gaps.iter().zip(rewards).map(|(g, r)| (r - rate * g).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std_error = (resid_var / n).sqrt() / mg.abs();
    let z = normal_quantile(level);
    Ok(RateEstimate { rate, std_error, ci_lo: rate - z * std_error, ci_hi: rate + z * std_error, cycles: gaps.len() })
}

/// Common binning of the real line used by [`tv_empirical`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Binning {
    /// Bin index with values outside `[lo, hi)` clamped to the edge bins.
    pub fn index(&self, x: f64) -> usize {
        let t = (x - self.lo) / (self.hi - self.lo) * self.bins as f64;
        if t.is_nan() || t < 0.0 {
            0
        } else {
            (t as usize).min(self.bins - 1)
        }
    }

    /// Normalized histogram of a sample.
    pub fn histogram(&self, xs: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.bins];
        for &x in xs {
            h[self.index(x)] += 1.0;
        }
        let n = xs.len().max(1) as f64;
        h.iter_mut().for_each(|c| *c /= n);
        h
    }
}

/// Half the L1 distance between the binned empirical laws of two samples.
pub fn tv_empirical(a: &[f64], b: &[f64], binning: Binning) -> f64 {
    let ha = binning.histogram(a);
    let hb = binning.histogram(b);
    0.5 * ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Total variation distance between the empirical laws of two categorical samples.
pub fn tv_categorical<T: Ord + Clone>(a: &[T], b: &[T]) -> f64 {
    use std::collections::BTreeMap;
    let mut counts: BTreeMap<T, (f64, f64)> = BTreeMap::new();
    for x in a {
        counts.entry(x.clone()).or_default().0 += 1.0;
    }
    for x in b {
        counts.entry(x.clone()).or_default().1 += 1.0;
    }
    let (na, nb) = (a.len().max(1) as f64, b.len().max(1) as f64);
    0.5 * counts.values().map(|(x, y)| (x / na - y / nb).abs()).sum::<f64>()
}

/// Null rejection rates of the two-sample tests over synthetic repetitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub test: String,
    pub repetitions: usize,
    pub alpha: f64,
    pub rejection_rate: f64,
}

fn uniform_sample(seed: u64, lane: u64, n: usize) -> Vec<f64> {
    (0..n).map(|i| unit_f64(hash_key(seed, lane, i as i64, 0))).collect()
}

/// Rejection rate of the KS test on pairs of independent uniform samples.
pub fn calibrate_ks(repetitions: usize, n: usize, alpha: f64, seed: u64) -> Calibration {
    let rejections: usize = (0..repetitions)
        .into_par_iter()
        .map(|r| {
            let a = uniform_sample(seed, 2 * r as u64, n);
            let b = uniform_sample(seed, 2 * r as u64 + 1, n);
            usize::from(ks_two_sample(&a, &b, alpha).map(|t| t.reject).unwrap_or(false))
        })
        .sum();
    Calibration {
        test: "ks_two_sample".into(),
        repetitions,
        alpha,
        rejection_rate: rejections as f64 / repetitions as f64,
    }
}

/// Rejection rate of the permutation test on independent uniform pairs.
pub fn calibrate_permutation(repetitions: usize, n: usize, permutations: usize, alpha: f64, seed: u64) -> Calibration {
    let rejections: usize = (0..repetitions)
        .map(|r| {
            let u = uniform_sample(seed ^ 0xA5A5, 2 * r as u64, n);
            let v = uniform_sample(seed ^ 0xA5A5, 2 * r as u64 + 1, n);
            let pairs: Vec<(f64, f64)> = u.into_iter().zip(v).collect();
            usize::from(
                permutation_independence_scalar(&pairs, permutations, seed.wrapping_add(r as u64), alpha)
                    .map(|t| t.reject)
                    .unwrap_or(false),
            )
        })
        .sum();
    Calibration {
        test: "permutation_independence".into(),
        repetitions,
        alpha,
        rejection_rate: rejections as f64 / repetitions as f64,
    }
}

/// Mean and sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_identical_samples_have_zero_statistic() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let r = ks_two_sample(&a, &a, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
        assert_eq!(ks_two_sample(&[], &a, 0.05), Err(StatsError::Empty));
    }

    #[test]
    fn ks_detects_shift() {
        let a = uniform_sample(1, 0, 10_000);
        let b: Vec<f64> = uniform_sample(1, 1, 10_000).iter().map(|x| x + 0.2).collect();
        assert!(ks_two_sample(&a, &b, 0.05).unwrap().reject);
    }

    #[test]
    fn ks_handles_ties() {
        let a = vec![1.0, 1.0, 2.0, 2.0];
        let b = vec![1.0, 2.0, 2.0, 2.0];
        assert!((ks_statistic(&a, &b) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_q_known_value() {
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn permutation_detects_identity() {
        let u = uniform_sample(3, 0, 200);
        let pairs: Vec<(f64, f64)> = u.iter().map(|x| (*x, *x)).collect();
        let r = permutation_independence_scalar(&pairs, 999, 1, 0.05).unwrap();
        assert!(r.p_value <= 1.0 / 1000.0 + 1e-12);
    }

    #[test]
    fn distance_correlation_bounds() {
        let u: Vec<Vec<f64>> = uniform_sample(4, 0, 100).into_iter().map(|x| vec![x]).collect();
        let d = distance_correlation(&u, &u);
        assert!((d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn geometric_fit_recovers_rate() {
        let sample: Vec<u64> =
            (0..100_000).map(|i| crate::core::geometric_from_bits(hash_key(5, 0, i, 0), 0.5)).collect();
        let fit = geometric_tail_fit(&sample).unwrap();
        assert!((fit.rate - 2f64.ln()).abs() < 0.1 * 2f64.ln(), "{fit:?}");
        assert!(fit.r_squared > 0.99);
    }

    #[test]
    fn constant_data_has_no_tail() {
        assert!(geometric_tail_fit(&vec![4u64; 5000]).is_err());
    }

    #[test]
    fn renewal_reward_identities() {
        let ones = vec![1.0; 200];
        let r = renewal_reward(&ones, &ones, 0.95).unwrap();
        assert_eq!(r.rate, 1.0);
        assert_eq!(r.ci_hi - r.ci_lo, 0.0);
        let gaps: Vec<f64> =
            (0..1000).map(|i| crate::core::geometric_from_bits(hash_key(6, 0, i, 0), 0.5) as f64).collect();
        let r = renewal_reward(&gaps, &gaps, 0.95).unwrap();
        assert!((r.rate - 1.0).abs() < 1e-12);
        assert_eq!(renewal_reward(&[0.0, 0.0], &[1.0, 1.0], 0.95), Err(StatsError::ZeroMeanGap));
    }

    #[test]
    fn tv_extremes() {
        let bin = Binning { lo: 0.0, hi: 1.0, bins: 64 };
        let a = uniform_sample(7, 0, 1000);
        assert_eq!(tv_empirical(&a, &a, bin), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 5.0).collect();
        let c: Vec<f64> = a.iter().map(|x| x - 5.0).collect();
        assert!((tv_empirical(&b, &c, bin) - 1.0).abs() < 1e-12);
        assert_eq!(tv_categorical(&[1, 1, 2], &[3, 3]), 1.0);
    }

    #[test]
    fn tv_same_law_matches_binomial_fluctuation() {
        let bin = Binning { lo: 0.0, hi: 1.0, bins: 64 };
        let n = 100_000usize;
        let a = uniform_sample(8, 0, n);
        let b = uniform_sample(8, 1, n);
        let p = 1.0 / 64.0;
        let expected = 0.5 * 64.0 * (4.0 * p * (1.0 - p) / (std::f64::consts::PI * n as f64)).sqrt();
        let tv = tv_empirical(&a, &b, bin);
        assert!(tv > 0.5 * expected && tv < 1.5 * expected, "tv {tv} expected {expected}");
    }
}
