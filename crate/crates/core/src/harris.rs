//! Harris chains made regenerative by splitting.
//!
//! On the small set `V` the kernel decomposes as `P(x, ·) = p φ(·) + (1 - p) Q(x, ·)`.
//! The split chain flips a coin with success probability `p` on each visit
//! to `V`: on success it draws the next state from `φ`, otherwise from `Q`.
//! Success times cut the trajectory into i.i.d. cycles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{hash_key, mix64, unit_f64};
use crate::regen::{
    scan_break_times, BreakConfig, CycleBuilder, FutureEvent, FutureVerdict, ProcessAdapter, ScanReport,
};
use crate::stats::{tv_empirical, Binning};

const LANE_COIN: u64 = 0x0048_4152_5249_5343;
const LANE_UNIFORM: u64 = 0x0048_4152_5249_5355;

/// Errors raised by the Harris module.
#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum HarrisError {
    #[error("state {0} lies outside the state space")]
    Domain(f64),
    #[error("need at least two success times, got {0}")]
    TooFewSuccesses(usize),
    #[error("invalid chain parameters: {0}")]
    Params(String),
}

/// A chain with an explicit minorization on `V`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "chain", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitChainSpec {
    /// `X' = X/2 + U` on `[0, 2]`, `V = [0, 1]`, `p = 1/2`, `φ` uniform on `[1/2, 1]`.
    Split,
    /// `X' = max(0, X + U - c)` on `[0, ∞)`, `V = {0}`, `p = 1`, `φ = P(0, ·)`.
    Lindley { c: f64 },
}

impl SplitChainSpec {
    /// The Lindley fixture with drift `1/2 - c = -1/4`.
    pub fn lindley() -> Self {
        SplitChainSpec::Lindley { c: 0.75 }
    }

    /// Check parameters.
    pub fn validate(&self) -> Result<(), HarrisError> {
        match self {
            SplitChainSpec::Split => Ok(()),
            SplitChainSpec::Lindley { c } if *c > 0.5 && *c < 1.0 => Ok(()),
            SplitChainSpec::Lindley { c } => {
                Err(HarrisError::Params(format!("Lindley offset {c} must lie in (1/2, 1) for a recurrent atom")))
            }
        }
    }

    /// Coin success probability `p`.
    pub fn p(&self) -> f64 {
        match self {
            SplitChainSpec::Split => 0.5,
            SplitChainSpec::Lindley { .. } => 1.0,
        }
    }

    /// Membership in the state space.
    pub fn in_space(&self, x: f64) -> bool {
        match self {
            SplitChainSpec::Split => (0.0..=2.0).contains(&x),
            SplitChainSpec::Lindley { .. } => x >= 0.0 && x.is_finite(),
        }
    }

    /// Membership in `V`.
    pub fn in_v(&self, x: f64) -> bool {
        match self {
            SplitChainSpec::Split => (0.0..=1.0).contains(&x),
            SplitChainSpec::Lindley { .. } => x == 0.0,
        }
    }

    /// A binning that covers the bulk of the state space.
    pub fn binning(&self) -> Binning {
        match self {
            SplitChainSpec::Split => Binning { lo: 0.0, hi: 2.0, bins: 64 },
            SplitChainSpec::Lindley { .. } => Binning { lo: 0.0, hi: 2.0, bins: 64 },
        }
    }

    /// One step of the original kernel from a uniform `u`.
    pub fn direct(&self, x: f64, u: f64) -> f64 {
        match self {
            SplitChainSpec::Split => x / 2.0 + u,
            SplitChainSpec::Lindley { c } => (x + u - c).max(0.0),
        }
    }

    /// A draw from `φ`.
    pub fn phi(&self, u: f64) -> f64 {
        match self {
            SplitChainSpec::Split => 0.5 + u / 2.0,
            SplitChainSpec::Lindley { c } => (u - c).max(0.0),
        }
    }

    /// A draw from the residual kernel `Q(x, ·)`, `x ∈ V`.
    pub fn residual(&self, x: f64, u: f64) -> f64 {
        match self {
            SplitChainSpec::Split => {
                let t = u / 2.0;
                let first = (1.0 - x) / 2.0;
                if t < first {
                    x / 2.0 + t
                } else {
                    1.0 + (t - first)
                }
            }
            SplitChainSpec::Lindley { .. } => self.direct(x, u),
        }
    }

    /// Kernel density of the split chain at `y` from `x`, on half-open intervals.
    pub fn kernel_density(&self, x: f64, y: f64) -> f64 {
        indicator(x / 2.0, x / 2.0 + 1.0, y)
    }

    /// Density of `φ` for the split chain.
    pub fn phi_density(&self, y: f64) -> f64 {
        2.0 * indicator(0.5, 1.0, y)
    }

    /// Density of `Q(x, ·)` for the split chain.
    pub fn residual_density(&self, x: f64, y: f64) -> f64 {
        2.0 * (indicator(x / 2.0, 0.5, y) + indicator(1.0, x / 2.0 + 1.0, y))
    }
}

fn indicator(lo: f64, hi: f64, y: f64) -> f64 {
    if y >= lo && y < hi {
        1.0
    } else {
        0.0
    }
}

/// Largest deviation of `p φ + (1 - p) Q(x, ·)` from `P(x, ·)` over an
/// `points × points` grid of `x ∈ V` and `y ∈ [0, 2]`, together with the
/// smallest slack of the minorization `P(x, ·) - p φ`.
pub fn decomposition_check(points: usize) -> (f64, f64) {
    let s = SplitChainSpec::Split;
    let p = s.p();
    let mut worst = 0.0f64;
    let mut slack = f64::INFINITY;
    for i in 0..points {
        let x = i as f64 / (points - 1).max(1) as f64;
        for j in 0..points {
            let y = 2.0 * j as f64 / points as f64;
            let k = s.kernel_density(x, y);
            let split = p * s.phi_density(y) + (1.0 - p) * s.residual_density(x, y);
            worst = worst.max((split - k).abs());
            slack = slack.min(k - p * s.phi_density(y));
        }
    }
    (worst, slack)
}

/// Total mass of `Q(x, ·)` for the split chain, integrated exactly.
pub fn residual_mass(x: f64) -> f64 {
    2.0 * ((0.5 - x / 2.0) + (x / 2.0))
}

/// Coins `α_n` and uniforms driving the split chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarrisDriving {
    pub seed: u64,
}

impl HarrisDriving {
    /// `α_n` for coin probability `p`.
    #[inline]
    pub fn coin(&self, n: u64, p: f64) -> bool {
        p >= 1.0 || unit_f64(hash_key(self.seed, LANE_COIN, n as i64, 0)) < p
    }

    /// The uniform used at step `n`.
    #[inline]
    pub fn uniform(&self, n: u64) -> f64 {
        unit_f64(hash_key(self.seed, LANE_UNIFORM, n as i64, 0))
    }
}

/// Move from `X_{n-1} = x` to `X_n`; returns the new state and whether a
/// coin success occurred (`X_{n-1} ∈ V`, `α_n = 1`).
pub fn step_split(
    spec: &SplitChainSpec,
    x: f64,
    d: &HarrisDriving,
    n: u64,
) -> Result<(f64, bool), HarrisError> {
    if !spec.in_space(x) {
        return Err(HarrisError::Domain(x));
    }
    let u = d.uniform(n);
    if spec.in_v(x) {
        if d.coin(n, spec.p()) {
            Ok((spec.phi(u), true))
        } else {
            Ok((spec.residual(x, u), false))
        }
    } else {
        Ok((spec.direct(x, u), false))
    }
}

/// A simulated split trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitTrace {
    /// `X_0, ..., X_N`.
    pub states: Vec<f64>,
    /// `α_n` for steps `n` with `X_{n-1} ∈ V`, `None` otherwise.
    pub coins: Vec<Option<bool>>,
    /// Success times `T_0 < T_1 < ...`.
    pub successes: Vec<u64>,
}

/// Simulate `steps` steps of the split chain from `x0`.
pub fn simulate(spec: &SplitChainSpec, d: &HarrisDriving, x0: f64, steps: u64) -> Result<SplitTrace, HarrisError> {
    let mut states = Vec::with_capacity(steps as usize + 1);
    let mut coins = Vec::with_capacity(steps as usize);
    let mut successes = Vec::new();
    let mut x = x0;
    states.push(x);
    for n in 1..=steps {
        let in_v = spec.in_v(x);
        let (y, hit) = step_split(spec, x, d, n)?;
        coins.push(in_v.then(|| d.coin(n, spec.p())));
        if hit {
            successes.push(n);
        }
        x = y;
        states.push(x);
    }
    Ok(SplitTrace { states, coins, successes })
}

/// The Harris-native scan: cycles between success times, traced by `X_n`.
///
/// Cycle boundaries are the success times `T_i`; cycle `i` carries
/// `X_{T_i}, ..., X_{T_{i+1} - 1}`.
pub fn regeneration_scan(
    spec: &SplitChainSpec,
    d: &HarrisDriving,
    x0: f64,
    steps: u64,
) -> Result<ScanReport<f64>, HarrisError> {
    let trace = simulate(spec, d, x0, steps)?;
    if trace.successes.len() < 2 {
        return Err(HarrisError::TooFewSuccesses(trace.successes.len()));
    }
    let mut builder = CycleBuilder::new(1, steps, true);
    let mut next = 0usize;
    for (n, &x) in trace.states.iter().enumerate() {
        if next < trace.successes.len() && trace.successes[next] == n as u64 {
            builder.record(n as u64, None);
            next += 1;
        }
        builder.push_trace(x);
    }
    Ok(builder.finish())
}

/// Adapter for the generic scanner: `H_n = {X_n ∈ V}`.
#[derive(Clone, Copy, Debug)]
pub struct HarrisAdapter {
    pub spec: SplitChainSpec,
    pub x0: f64,
}

impl ProcessAdapter for HarrisAdapter {
    type Driving = HarrisDriving;
    type State = f64;
    type Trace = f64;

    fn initial(&self) -> f64 {
        self.x0
    }

    fn advance(&self, d: &HarrisDriving, state: &mut f64, n: u64) {
        *state = step_split(&self.spec, *state, d, n + 1).map(|(y, _)| y).unwrap_or(f64::NAN);
    }

    fn past(&self, state: &f64, _: u64) -> bool {
        self.spec.in_v(*state)
    }

    fn functional(&self, _: &f64, current: &f64) -> f64 {
        *current
    }
}

/// `F_n = {α_{n+1} = 1}`.
#[derive(Clone, Copy, Debug)]
pub struct CoinFuture {
    pub p: f64,
}

impl FutureEvent for CoinFuture {
    type Driving = HarrisDriving;

    fn evaluate(&self, d: &HarrisDriving, n: u64, _: u64) -> FutureVerdict {
        if d.coin(n + 1, self.p) {
            FutureVerdict::Occurs
        } else {
            FutureVerdict::Fails(1)
        }
    }
}

/// Success times from the generic scanner: break time `n` (with `A_n`
/// occurring) corresponds to success time `n + 1`.
pub fn generic_success_times(spec: &SplitChainSpec, d: &HarrisDriving, x0: f64, steps: u64) -> Vec<u64> {
    let cfg = BreakConfig::new(1, steps.saturating_sub(1)).with_traces(false);
    let report = scan_break_times(&HarrisAdapter { spec: *spec, x0 }, d, &CoinFuture { p: spec.p() }, &cfg);
    report.taus.iter().map(|t| t + 1).collect()
}

/// Pairwise total variation distances between the laws of `X_n` started
/// from each initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvMatrix {
    pub inits: Vec<f64>,
    pub n: u64,
    pub replicas: usize,
    pub tv: Vec<Vec<f64>>,
}

impl TvMatrix {
    /// The largest off-diagonal entry.
    pub fn max(&self) -> f64 {
        self.tv.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// `X_n` from each initial state over `replicas` replicas, binned TV.
///
/// Replica `r` uses the same driving for every initial state, so chains
/// from different starts are coupled through their common coin successes
/// and the empirical laws differ only where the chains have not met.
pub fn tv_convergence_check(
    spec: &SplitChainSpec,
    inits: &[f64],
    n: u64,
    replicas: usize,
    seed: u64,
) -> Result<TvMatrix, HarrisError> {
    for &x in inits {
        if !spec.in_space(x) {
            return Err(HarrisError::Domain(x));
        }
    }
    let samples: Vec<Vec<f64>> = inits
        .iter()
        .map(|&x0| {
            (0..replicas)
                .into_par_iter()
                .map(|r| {
                    let d = HarrisDriving { seed: mix64(seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)) };
                    let mut x = x0;
                    for step in 1..=n {
                        x = step_split(spec, x, &d, step).map(|(y, _)| y).unwrap_or(f64::NAN);
                    }
                    x
                })
                .collect()
        })
        .collect();
    let binning = spec.binning();
    let tv = samples.iter().map(|a| samples.iter().map(|b| tv_empirical(a, b, binning)).collect()).collect();
    Ok(TvMatrix { inits: inits.to_vec(), n, replicas, tv })
}

/// One-step samples from `x` through the split and through the original
/// kernel, on independent seeds.
pub fn one_step_samples(spec: &SplitChainSpec, x: f64, samples: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let split = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let d = HarrisDriving { seed: mix64(seed ^ 0x5A5A) };
            step_split(spec, x, &d, i + 1).map(|(y, _)| y).unwrap_or(f64::NAN)
        })
        .collect();
    let direct = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let d = HarrisDriving { seed: mix64(seed ^ 0xA5A5) };
            spec.direct(x, d.uniform(i + 1))
        })
        .collect();
    (split, direct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_statistic;

    #[test]
    fn decomposition_is_exact() {
        let (worst, slack) = decomposition_check(200);
        assert!(worst <= 1e-12);
        assert!(slack >= 0.0);
        for i in 0..=10 {
            assert!((residual_mass(i as f64 / 10.0) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_sampler_has_the_residual_support() {
        let s = SplitChainSpec::Split;
        for i in 0..1000 {
            let u = (i as f64 + 0.5) / 1000.0;
            let x = 0.3;
            let y = s.residual(x, u);
            assert!(s.residual_density(x, y) > 0.0, "{y}");
        }
        assert!((s.residual(0.3, 0.0) - 0.15).abs() < 1e-15);
        assert!((s.residual(0.3, 0.7) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn examples() {
        let s = SplitChainSpec::Split;
        for seed in 0..200 {
            let d = HarrisDriving { seed };
            let (y, hit) = step_split(&s, 0.5, &d, 1).unwrap();
            if hit {
                assert!((0.5..=1.0).contains(&y));
            }
            let (z, hit2) = step_split(&s, 1.5, &d, 1).unwrap();
            assert!(!hit2);
            assert!((z - (0.75 + d.uniform(1))).abs() < 1e-15);
        }
        assert_eq!(step_split(&s, 2.5, &HarrisDriving { seed: 0 }, 1), Err(HarrisError::Domain(2.5)));
    }

    #[test]
    fn one_step_law_is_preserved() {
        let (a, b) = one_step_samples(&SplitChainSpec::Split, 0.3, 100_000, 4);
        assert!(ks_statistic(&a, &b) < 0.01);
    }

    #[test]
    fn scanners_agree() {
        for spec in [SplitChainSpec::Split, SplitChainSpec::lindley()] {
            let d = HarrisDriving { seed: 31 };
            let native = regeneration_scan(&spec, &d, 0.0, 20_000).unwrap();
            let trace = simulate(&spec, &d, 0.0, 20_000).unwrap();
            assert_eq!(native.taus, trace.successes);
            assert_eq!(generic_success_times(&spec, &d, 0.0, 20_000), trace.successes);
            for (n, c) in trace.coins.iter().enumerate() {
                assert_eq!(c.is_some(), spec.in_v(trace.states[n]));
            }
        }
    }

    #[test]
    fn full_minorization_regenerates_every_step() {
        let spec = SplitChainSpec::lindley();
        let d = HarrisDriving { seed: 2 };
        let t = simulate(&spec, &d, 0.0, 1000).unwrap();
        for w in t.successes.windows(2) {
            assert!(t.states[w[0] as usize..w[1] as usize - 1].iter().skip(1).all(|&x| x > 0.0));
        }
        assert!(t.successes.windows(2).any(|w| w[1] - w[0] == 1));
    }

    #[test]
    fn tv_decreases() {
        let spec = SplitChainSpec::Split;
        let m0 = tv_convergence_check(&spec, &[0.0, 2.0], 0, 1000, 3).unwrap();
        assert_eq!(m0.tv[0][1], 1.0);
        let m5 = tv_convergence_check(&spec, &[0.0, 2.0], 5, 20_000, 3).unwrap();
        let m20 = tv_convergence_check(&spec, &[0.0, 2.0], 20, 20_000, 3).unwrap();
        assert!(m20.max() <= m5.max());
        assert!(m20.max() < 0.01);
    }
}
