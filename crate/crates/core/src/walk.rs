//! Random walks with positive drift: partial sums, future-minimum events,
//! strict records and two-sided record break times.

use std::collections::VecDeque;
use std::marker::PhantomData;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Alphabet, DrivingStream, Law, ScalarSource};
use crate::regen::{scan_break_times, BreakConfig, FutureEvent, FutureVerdict, ProcessAdapter, ScanReport};

/// Errors raised by walk configuration.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("increment mean {0} is not positive")]
    NonPositiveDrift(f64),
    #[error("increments have no negative mass")]
    NoNegativeMass,
    #[error("unsupported increment law: {0}")]
    Unsupported(String),
}

/// Which inequality the future-minimum event uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FutureVariant {
    /// `S_m - S_n ≥ 0` for all `m > n`.
    #[default]
    Weak,
    /// `S_m - S_n > 0` for all `m > n`.
    Strict,
}

/// Increment law of a walk.
#[derive(Clone, Debug, PartialEq)]
pub enum Increments {
    /// Integer increments from a finite alphabet.
    Finite(Alphabet),
    /// Real increments uniform on `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
}

impl Increments {
    /// The law of `ξ_1`.
    pub fn mean(&self) -> f64 {
        match self {
            Self::Finite(a) => a.mean(),
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    /// `P(ξ < 0)`.
    pub fn negative_mass(&self) -> f64 {
        match self {
            Self::Finite(a) => a.symbols().iter().zip(a.weights()).filter(|(s, _)| **s < 0).map(|(_, w)| w).sum(),
            Self::Uniform { lo, hi } => ((0.0f64.min(*hi) - lo) / (hi - lo)).max(0.0),
        }
    }

    /// Reject laws without positive drift or without negative mass.
    pub fn validate(&self) -> Result<(), WalkError> {
        let mean = self.mean();
        if mean.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(WalkError::NonPositiveDrift(mean));
        }
        if self.negative_mass() <= 0.0 {
            return Err(WalkError::NoNegativeMass);
        }
        Ok(())
    }
}

/// Walk parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkConfig {
    pub increments: Increments,
    pub steps: u64,
    pub variant: FutureVariant,
}

impl WalkConfig {
    /// Validate and build.
    pub fn new(increments: Increments, steps: u64, variant: FutureVariant) -> Result<Self, WalkError> {
        increments.validate()?;
        Ok(Self { increments, steps, variant })
    }

    /// The driving source for a seed.
    pub fn source(&self, seed: u64) -> WalkSource {
        match &self.increments {
            Increments::Finite(a) => WalkSource::new(DrivingStream::new(seed, Law::Finite(a.clone())), 1.0, 0.0),
            Increments::Uniform { lo, hi } => WalkSource::new(DrivingStream::new(seed, Law::Uniform), hi - lo, *lo),
        }
    }
}

/// A driving stream mapped affinely, `ξ_n = offset + scale · u_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkSource {
    pub stream: DrivingStream,
    pub scale: f64,
    pub offset: f64,
}

impl WalkSource {
    /// Wrap a stream.
    pub fn new(stream: DrivingStream, scale: f64, offset: f64) -> Self {
        Self { stream, scale, offset }
    }
}

impl ScalarSource for WalkSource {
    fn value_at(&self, n: i64) -> f64 {
        self.offset + self.scale * self.stream.real_at(n)
    }
}

/// Partial sums `S_0 = 0, S_1, ..., S_N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkPath {
    pub sums: Vec<f64>,
}

impl WalkPath {
    /// `S_n`.
    pub fn at(&self, n: usize) -> f64 {
        self.sums[n]
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.sums.len() - 1
    }
}

/// Exact partial sums of `steps` increments.
pub fn simulate_walk<S: ScalarSource + ?Sized>(source: &S, steps: u64) -> WalkPath {
    let mut sums = Vec::with_capacity(steps as usize + 1);
    let mut s = 0.0;
    sums.push(s);
    for n in 1..=steps as i64 {
        s += source.value_at(n);
        sums.push(s);
    }
    WalkPath { sums }
}

/// The future-minimum event `F_n`: partial sums from `n` stay nonnegative
/// (weak) or positive (strict). Failure is decided at the first violating
/// lag; occurrence is never decided in finite time.
#[derive(Clone, Copy, Debug)]
pub struct FutureMinimum<S: ?Sized> {
    pub variant: FutureVariant,
    _source: PhantomData<fn(&S)>,
}

impl<S: ?Sized> FutureMinimum<S> {
    /// An evaluator of the given variant.
    pub fn new(variant: FutureVariant) -> Self {
        Self { variant, _source: PhantomData }
    }
}

impl<S: ScalarSource + ?Sized> FutureEvent for FutureMinimum<S> {
    type Driving = S;

    fn evaluate(&self, driving: &S, n: u64, horizon: u64) -> FutureVerdict {
        let mut sum = 0.0;
        for lag in 1..=horizon {
            sum += driving.value_at((n + lag) as i64);
            let fails = match self.variant {
                FutureVariant::Weak => sum < 0.0,
                FutureVariant::Strict => sum <= 0.0,
            };
            if fails {
                return FutureVerdict::Fails(lag);
            }
        }
        FutureVerdict::Undecided(horizon)
    }
}

/// State of a walk for the scanner: `S_n` and `max_{j<n} S_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkState {
    pub sum: f64,
    pub max_before: f64,
}

/// Walk adapter; `H_n` is either `Ω` or the strict record `S_n > S_j, j < n`.
#[derive(Clone, Copy, Debug)]
pub struct WalkAdapter<S: ?Sized> {
    pub records: bool,
    _source: PhantomData<fn(&S)>,
}

impl<S: ?Sized> WalkAdapter<S> {
    /// `H_n = Ω` when `records` is false.
    pub fn new(records: bool) -> Self {
        Self { records, _source: PhantomData }
    }
}

impl<S: ScalarSource + ?Sized> ProcessAdapter for WalkAdapter<S> {
    type Driving = S;
    type State = WalkState;
    type Trace = f64;

    fn initial(&self) -> WalkState {
        WalkState { sum: 0.0, max_before: f64::NEG_INFINITY }
    }

    fn advance(&self, driving: &S, state: &mut WalkState, n: u64) {
        state.max_before = state.max_before.max(state.sum);
        state.sum += driving.value_at(n as i64 + 1);
    }

    fn past(&self, state: &WalkState, _n: u64) -> bool {
        !self.records || state.sum > state.max_before
    }

    fn functional(&self, base: &WalkState, current: &WalkState) -> f64 {
        current.sum - base.sum
    }
}

/// Break times of `F_n` alone (`H_n = Ω`) through the generic scanner.
pub fn future_minimum_scan<S: ScalarSource + ?Sized>(source: &S, variant: FutureVariant, cfg: &BreakConfig) -> ScanReport<f64> {
    scan_break_times(&WalkAdapter::<S>::new(false), source, &FutureMinimum::<S>::new(variant), cfg)
}

/// Strict last-exit times `S_m > S_n` for all `m > n`, through the generic scanner.
pub fn last_exit_scan<S: ScalarSource + ?Sized>(source: &S, cfg: &BreakConfig) -> ScanReport<f64> {
    future_minimum_scan(source, FutureVariant::Strict, cfg)
}

/// Two-sided records: strict past record and strict future minimum.
pub fn two_sided_record_scan<S: ScalarSource + ?Sized>(source: &S, cfg: &BreakConfig) -> ScanReport<f64> {
    scan_break_times(&WalkAdapter::<S>::new(true), source, &FutureMinimum::<S>::new(FutureVariant::Strict), cfg)
}

/// Truncated break times computed from a precomputed path with a sliding
/// window minimum: `n` qualifies when `min_{n<m≤n+H} S_m` is `≥ S_n` (weak) or
/// `> S_n` (strict), and, with `records`, `S_n > max_{j<n} S_j`. Equivalent to
/// the generic scanner under truncation, in `O(N + H)` time.
pub fn fast_truncated_scan(
    path: &WalkPath,
    horizon: usize,
    max_time: usize,
    variant: FutureVariant,
    records: bool,
    min_sep: usize,
) -> Vec<u64> {
    assert!(path.steps() >= max_time + horizon, "path too short for the horizon");
    let s = &path.sums;
    let mut window: VecDeque<usize> = VecDeque::new();
    let mut taus = Vec::new();
    let mut next_allowed = 0usize;
    let mut max_before = f64::NEG_INFINITY;
    let mut filled = 0usize;
    for n in 0..=max_time {
        while filled < n + horizon {
            filled += 1;
            while window.back().is_some_and(|&b| s[b] >= s[filled]) {
                window.pop_back();
            }
            window.push_back(filled);
        }
        while window.front().is_some_and(|&f| f <= n) {
            window.pop_front();
        }
        let min_future = s[*window.front().expect("nonempty window")];
        let future_ok = match variant {
            FutureVariant::Weak => min_future >= s[n],
            FutureVariant::Strict => min_future > s[n],
        };
        let past_ok = !records || s[n] > max_before;
        if n >= next_allowed && future_ok && past_ok {
            taus.push(n as u64);
            next_allowed = n + min_sep.max(1);
        }
        max_before = max_before.max(s[n]);
    }
    taus
}

/// Check `max_{n<τ} S_n < S_τ < min_{τ<n≤τ+H} S_n` for every break time.
pub fn check_sandwich(path: &WalkPath, taus: &[u64], horizon: usize) -> bool {
    let s = &path.sums;
    let mut prefix_max = vec![f64::NEG_INFINITY; s.len() + 1];
    for i in 0..s.len() {
        prefix_max[i + 1] = prefix_max[i].max(s[i]);
    }
    taus.iter().all(|&t| {
        let t = t as usize;
        let hi = (t + horizon).min(s.len() - 1);
        prefix_max[t] < s[t] && s[t + 1..=hi].iter().all(|&x| x > s[t])
    })
}

/// `P(F_0)` for the `{-1, 0, +1}` walk with `P(+1)=p > P(-1)=q`: `1 - q/p`
/// for the weak variant and `p - q` for the strict one.
pub fn skip_free_occurrence(p: f64, q: f64, variant: FutureVariant) -> f64 {
    match variant {
        FutureVariant::Weak => 1.0 - q / p,
        FutureVariant::Strict => p - q,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_law() -> Increments {
        Increments::Finite(Alphabet::float(vec![-1, 0, 1], vec![0.2, 0.4, 0.4]).unwrap())
    }

    #[test]
    fn all_plus_one_walk() {
        let a = Alphabet::float(vec![1], vec![1.0]).unwrap();
        let source = WalkSource::new(DrivingStream::new(1, Law::Finite(a)), 1.0, 0.0);
        let path = simulate_walk(&source, 50);
        assert!(path.sums.iter().enumerate().all(|(i, s)| *s == i as f64));
        let cfg = BreakConfig::new(20, 30);
        let r = two_sided_record_scan(&source, &cfg);
        assert_eq!(r.taus, (0..=30).collect::<Vec<_>>());
    }

    #[test]
    fn zero_drift_is_rejected() {
        let a = Alphabet::float(vec![-1, 1], vec![0.5, 0.5]).unwrap();
        assert!(matches!(Increments::Finite(a).validate(), Err(WalkError::NonPositiveDrift(_))));
        let b = Alphabet::float(vec![0, 1], vec![0.5, 0.5]).unwrap();
        assert_eq!(Increments::Finite(b).validate(), Err(WalkError::NoNegativeMass));
    }

    #[test]
    fn strict_fails_at_first_non_positive_sum() {
        let a = Alphabet::float(vec![-1, 0, 1], vec![0.2, 0.4, 0.4]).unwrap();
        let source = WalkSource::new(DrivingStream::new(9, Law::Finite(a)), 1.0, 0.0);
        let f = FutureMinimum::<WalkSource>::new(FutureVariant::Strict);
        for n in 0..200u64 {
            if let FutureVerdict::Fails(lag) = f.evaluate(&source, n, 50) {
                let sum: f64 = (1..=lag).map(|i| source.value_at((n + i) as i64)).sum();
                assert!(sum <= 0.0);
            }
        }
    }

    #[test]
    fn fast_scan_matches_generic() {
        let cfg_walk = WalkConfig::new(example_law(), 0, FutureVariant::Weak).unwrap();
        for seed in 0..4 {
            let source = cfg_walk.source(seed);
            let path = simulate_walk(&source, 3_000);
            for (variant, records) in [(FutureVariant::Weak, false), (FutureVariant::Strict, false), (FutureVariant::Strict, true)] {
                let fast = fast_truncated_scan(&path, 200, 2_000, variant, records, 1);
                let cfg = BreakConfig::new(200, 2_000).with_traces(false);
                let generic = scan_break_times(&WalkAdapter::<WalkSource>::new(records), &source, &FutureMinimum::new(variant), &cfg);
                assert_eq!(fast, generic.taus);
            }
        }
    }

    #[test]
    fn traces_are_partial_sums_of_segments() {
        let cfg_walk = WalkConfig::new(example_law(), 0, FutureVariant::Strict).unwrap();
        let source = cfg_walk.source(3);
        let r = two_sided_record_scan(&source, &BreakConfig::new(100, 2_000));
        for c in &r.cycles {
            let mut s = 0.0;
            for (i, n) in (c.tau_start + 1..=c.tau_end).enumerate() {
                s += source.value_at(n as i64);
                assert_eq!(c.trace[i], s);
            }
        }
        let path = simulate_walk(&source, 2_100);
        assert!(check_sandwich(&path, &r.taus, 100));
    }

    #[test]
    fn uniform_increments_validate() {
        assert!(Increments::Uniform { lo: -1.0, hi: 2.0 }.validate().is_ok());
        assert_eq!(Increments::Uniform { lo: 0.0, hi: 2.0 }.validate(), Err(WalkError::NoNegativeMass));
    }
}
