//! The basic infinite-bin model and its break-time scan.
//!
//! Bins are indexed by nonpositive integers. At each step the particle of
//! rank `ξ` counted from the right spawns a particle one bin to its right.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::BinsError;
use crate::core::{DrivingStream, Law};
use crate::regen::{resolve, BreakConfig, CycleBuilder, FutureEvent, FutureVerdict, ProcessAdapter, ScanReport};

/// A finitely supported bin configuration `(x_{-l}, ..., x_0)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinState {
    /// Counts from the leftmost occupied bin to bin 0; all entries positive.
    counts: Vec<u64>,
    total: u64,
}

impl BinState {
    /// A configuration from counts listed left to right; `None` unless all are positive.
    pub fn new(counts: Vec<u64>) -> Option<Self> {
        if counts.is_empty() || counts.contains(&0) {
            return None;
        }
        let total = counts.iter().sum();
        Some(Self { counts, total })
    }

    /// One particle in bin 0.
    pub fn single() -> Self {
        Self { counts: vec![1], total: 1 }
    }

    /// Counts from left to right.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `x_{-j}`, zero beyond the support.
    pub fn at(&self, j: usize) -> u64 {
        if j < self.counts.len() {
            self.counts[self.counts.len() - 1 - j]
        } else {
            0
        }
    }

    /// `x_0`.
    pub fn top(&self) -> u64 {
        self.at(0)
    }

    /// The extent `l`: the leftmost occupied bin is `-l`.
    pub fn extent(&self) -> usize {
        self.counts.len() - 1
    }

    /// `||x||`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// The projection `X(-k) = (x_{-k}, ..., x_0)`, padded with zeros on the left.
    pub fn window(&self, k: usize) -> Vec<u64> {
        (0..=k).rev().map(|j| self.at(j)).collect()
    }

    /// Apply one step with active rank `xi ≥ 1`.
    pub fn apply(&mut self, xi: u64) {
        let len = self.counts.len();
        self.total += 1;
        if xi <= self.counts[len - 1] {
            self.counts.push(1);
            return;
        }
        let mut cum = self.counts[len - 1];
        for k in 0..len - 1 {
            let below = self.counts[len - 2 - k];
            if xi <= cum + below {
                self.counts[len - 1 - k] += 1;
                return;
            }
            cum += below;
        }
        self.counts[0] += 1;
    }

    /// True when every count is positive and the total matches.
    pub fn is_valid(&self) -> bool {
        !self.counts.is_empty() && !self.counts.contains(&0) && self.counts.iter().sum::<u64>() == self.total
    }
}

/// The map `f`: the configuration after one step with active rank `xi`.
pub fn step_bins(x: &BinState, xi: u64) -> BinState {
    let mut y = x.clone();
    y.apply(xi.max(1));
    y
}

/// `F_n = ⋂_{l ≥ 1} {ξ_{n+l} ≤ slack + l}`, decided early when the law is bounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinFuture {
    pub slack: i64,
    /// Largest value of `ξ`, when finite.
    pub max_symbol: Option<i64>,
}

impl BinFuture {
    /// The future event of the basic model, `ξ_{n+i} ≤ i`.
    pub fn basic(law: &Law) -> Self {
        Self { slack: 0, max_symbol: max_symbol(law) }
    }
}

/// The largest value of an integer law with finite support.
pub fn max_symbol(law: &Law) -> Option<i64> {
    match law {
        Law::Finite(a) => a.symbols().iter().zip(a.weights()).filter(|(_, &w)| w > 0.0).map(|(&s, _)| s).max(),
        _ => None,
    }
}

/// `P(ξ = value)` for integer laws.
pub fn point_mass(law: &Law, value: i64) -> Option<f64> {
    match law {
        Law::Finite(a) => {
            Some(a.symbols().iter().zip(a.weights()).filter(|(&s, _)| s == value).map(|(_, &w)| w).sum())
        }
        Law::Geometric { r } if value >= 1 => Some((1.0 - r) * r.powi(value as i32 - 1)),
        Law::Geometric { .. } => Some(0.0),
        _ => None,
    }
}

impl FutureEvent for BinFuture {
    type Driving = DrivingStream;

    fn evaluate(&self, driving: &DrivingStream, n: u64, horizon: u64) -> FutureVerdict {
        for l in 1..=horizon as i64 {
            if self.max_symbol.is_some_and(|m| m <= self.slack + l) {
                return FutureVerdict::Occurs;
            }
            if driving.int_at(n as i64 + l) > self.slack + l {
                return FutureVerdict::Fails(l as u64);
            }
        }
        if self.max_symbol.is_some_and(|m| m <= self.slack + horizon as i64 + 1) {
            return FutureVerdict::Occurs;
        }
        FutureVerdict::Undecided(horizon)
    }
}

/// Fraction of occurrences of `future` over `probes` disjoint probe windows,
/// with undecided probes counted as occurring; also returns the undecided count.
pub fn occurrence_fraction(driving: &DrivingStream, future: &BinFuture, probes: u64, horizon: u64) -> (f64, u64) {
    let mut hits = 0u64;
    let mut undecided = 0u64;
    for i in 0..probes {
        match future.evaluate(driving, i * (horizon + 1), horizon) {
            FutureVerdict::Occurs => hits += 1,
            FutureVerdict::Undecided(_) => {
                hits += 1;
                undecided += 1;
            }
            FutureVerdict::Fails(_) => {}
        }
    }
    (hits as f64 / probes.max(1) as f64, undecided)
}

/// `∏_{i=1}^{h} (1 - r^i)`: the truncated occurrence probability of `F_n` for geometric `ξ`.
pub fn geometric_target(r: f64, h: u64) -> f64 {
    (1..=h).map(|i| 1.0 - r.powi(i as i32)).product()
}

/// The past event for display depth `k`: `ξ_{n-k+1} = ... = ξ_n = 1`.
///
/// With `first_of_run`, the run must also start a fresh block: `ξ_{n-k} ≠ 1`
/// when `k ≥ 2`, and `n ≥ 2k`, so that no earlier `n - i` with `i < k` also
/// carries a full run.
fn past_event(k: usize, first_of_run: bool, recent: &VecDeque<i64>, n: u64) -> bool {
    if k == 0 {
        return true;
    }
    let len = recent.len();
    if n < k as u64 || len < k || !recent.iter().skip(len - k).all(|&x| x == 1) {
        return false;
    }
    if !first_of_run {
        return true;
    }
    if n < 2 * k as u64 || len < k + 1 {
        return false;
    }
    k == 1 || recent[len - k - 1] != 1
}

/// Adapter for the generic scanner; the state keeps the last `k + 1` symbols.
#[derive(Clone, Debug)]
pub struct BasicAdapter {
    pub params: BasicScanConfig,
}

impl ProcessAdapter for BasicAdapter {
    type Driving = DrivingStream;
    type State = (BinState, VecDeque<i64>);
    type Trace = Vec<u64>;

    fn initial(&self) -> Self::State {
        (self.params.initial.clone(), VecDeque::with_capacity(self.params.k + 2))
    }

    fn advance(&self, driving: &DrivingStream, state: &mut Self::State, n: u64) {
        let xi = driving.int_at(n as i64 + 1);
        state.0.apply(xi.max(1) as u64);
        state.1.push_back(xi);
        if state.1.len() > self.params.k + 1 {
            state.1.pop_front();
        }
    }

    fn past(&self, state: &Self::State, n: u64) -> bool {
        past_event(self.params.k, self.params.first_of_run, &state.1, n)
    }

    fn functional(&self, _: &Self::State, current: &Self::State) -> Vec<u64> {
        current.0.window(self.params.k)
    }
}

/// Parameters of a basic scan beyond the scanner settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicScanConfig {
    /// Display depth `k` of the trace `X_{n+i}(-k)`.
    pub k: usize,
    pub initial: BinState,
    /// Require the run of ones to start a fresh block (see [`BasicScanConfig::new`]).
    pub first_of_run: bool,
}

impl BasicScanConfig {
    /// Depth `k` from `initial`, with `A_n = ⋂_{i=1}^{k-1} B_{n-i}^c ∩ B_n`
    /// where `B_n` is a run of `k` ones ending at `n` followed by `F_n`.
    pub fn new(k: usize, initial: BinState) -> Self {
        Self { k, initial, first_of_run: true }
    }

    /// The plain run-of-ones past event, under which consecutive break times may overlap.
    pub fn plain_runs(mut self) -> Self {
        self.first_of_run = false;
        self
    }
}

/// Scan the basic model for `A_n = H_n ∩ F_n` with trace `X_{n+i}(-k)`.
///
/// Equivalent to the generic scanner with [`BasicAdapter`], without cloning
/// the configuration at break times.
pub fn scan_bins_basic(
    driving: &DrivingStream,
    params: &BasicScanConfig,
    cfg: &BreakConfig,
) -> Result<ScanReport<Vec<u64>>, BinsError> {
    match point_mass(&driving.law, 1) {
        Some(p) if p > 0.0 => {}
        Some(_) => return Err(BinsError::NoMassAtOne),
        None => return Err(BinsError::Law("the driving law must be integer valued".into())),
    }
    if !params.initial.is_valid() {
        return Err(BinsError::Law("initial configuration has an empty bin".into()));
    }
    let k = params.k;
    let future = BinFuture::basic(&driving.law);
    let mut builder = CycleBuilder::new(cfg.horizon, cfg.max_time, cfg.collect_traces);
    let mut state = params.initial.clone();
    let mut recent: VecDeque<i64> = VecDeque::with_capacity(k + 2);
    for n in 0..=cfg.max_time {
        if n > 0 {
            let xi = driving.int_at(n as i64);
            state.apply(xi.max(1) as u64);
            recent.push_back(xi);
            if recent.len() > k + 1 {
                recent.pop_front();
            }
            if builder.collecting() {
                builder.push_trace(state.window(k));
            }
        }
        if builder.last_tau().is_some_and(|last| n < last + cfg.min_separation) {
            continue;
        }
        if !past_event(k, params.first_of_run, &recent, n) {
            continue;
        }
        let res = resolve(&future, driving, n, cfg);
        builder.note_probe(res.undecided);
        builder.note_horizon(res.horizon_used);
        if res.occurs {
            builder.record(n, None);
        }
    }
    Ok(builder.finish())
}

/// The first `count` trace values after `τ_0`, concatenated across cycles.
pub fn post_tau0_samples<T: Clone>(report: &ScanReport<T>, count: usize) -> Vec<T> {
    report.cycles.iter().flat_map(|c| c.trace.iter().cloned()).take(count).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::Alphabet;
    use crate::regen::scan_break_times;

    fn bins(counts: &[u64]) -> BinState {
        BinState::new(counts.to_vec()).unwrap()
    }

    #[test]
    fn map_cases() {
        assert_eq!(step_bins(&bins(&[1]), 1), bins(&[1, 1]));
        assert_eq!(step_bins(&bins(&[3, 2]), 4), bins(&[3, 3]));
        assert_eq!(step_bins(&bins(&[2]), 5), bins(&[3]));
        assert_eq!(step_bins(&bins(&[3, 2]), 6), bins(&[4, 2]));
        assert_eq!(step_bins(&bins(&[1, 3, 2]), 6), bins(&[1, 4, 2]));
        assert_eq!(step_bins(&bins(&[1, 3, 2]), 7), bins(&[2, 3, 2]));
    }

    #[test]
    fn conservation_and_support() {
        let s = DrivingStream::new(5, Law::Geometric { r: 0.5 });
        let mut x = bins(&[2, 1, 3]);
        for n in 1..=5000 {
            let before = x.total();
            x.apply(s.int_at(n) as u64);
            assert_eq!(x.total(), before + 1);
            assert!(x.is_valid());
        }
    }

    #[test]
    fn window_pads_with_zeros() {
        assert_eq!(bins(&[3, 2]).window(3), vec![0, 0, 3, 2]);
        assert_eq!(bins(&[4, 3, 2]).window(1), vec![3, 2]);
    }

    #[test]
    fn constant_one_breaks_everywhere() {
        let a = Alphabet::float(vec![1], vec![1.0]).unwrap();
        let s = DrivingStream::new(1, Law::Finite(a));
        let cfg = BreakConfig::new(16, 50);
        for k in 0..4 {
            let params = BasicScanConfig::new(k, BinState::single()).plain_runs();
            let r = scan_bins_basic(&s, &params, &cfg).unwrap();
            assert_eq!(r.taus, (k as u64..=50).collect::<Vec<u64>>());
        }
        let r1 = scan_bins_basic(&s, &BasicScanConfig::new(1, BinState::single()), &cfg).unwrap();
        assert_eq!(r1.taus, (2..=50).collect::<Vec<u64>>());
        let r2 = scan_bins_basic(&s, &BasicScanConfig::new(2, BinState::single()), &cfg).unwrap();
        assert!(r2.taus.is_empty());
    }

    #[test]
    fn the_k_ones_past_event() {
        let q: VecDeque<i64> = [2, 1, 1].into_iter().collect();
        assert!(past_event(2, true, &q, 4));
        assert!(!past_event(2, true, &q, 3));
        assert!(past_event(2, false, &q, 3));
        let q: VecDeque<i64> = [1, 1, 1].into_iter().collect();
        assert!(!past_event(2, true, &q, 4));
        assert!(past_event(2, false, &q, 4));
        assert!(past_event(1, true, &q, 4));
    }

    #[test]
    fn early_decision_for_bounded_laws() {
        let a = Alphabet::float(vec![1, 2, 3], vec![0.5, 0.3, 0.2]).unwrap();
        let s = DrivingStream::new(3, Law::Finite(a.clone()));
        let f = BinFuture::basic(&Law::Finite(a));
        for n in 0..200 {
            let v = f.evaluate(&s, n, 64);
            assert!(v.is_decided());
            let direct = s.int_at(n as i64 + 1) <= 1 && s.int_at(n as i64 + 2) <= 2;
            assert_eq!(v == FutureVerdict::Occurs, direct);
        }
    }

    #[test]
    fn mass_at_one_is_required() {
        let a = Alphabet::float(vec![2, 3], vec![0.5, 0.5]).unwrap();
        let s = DrivingStream::new(3, Law::Finite(a));
        let params = BasicScanConfig::new(0, BinState::single());
        assert_eq!(scan_bins_basic(&s, &params, &BreakConfig::new(8, 10)), Err(BinsError::NoMassAtOne));
    }

    #[test]
    fn native_scan_matches_generic_scanner() {
        let s = DrivingStream::new(17, Law::Geometric { r: 0.5 });
        for (k, first) in [(0usize, true), (1, true), (2, true), (3, true), (2, false)] {
            let mut params = BasicScanConfig::new(k, bins(&[2, 5, 1]));
            params.first_of_run = first;
            let cfg = BreakConfig::new(64, 4000);
            let native = scan_bins_basic(&s, &params, &cfg).unwrap();
            let generic = scan_break_times(&BasicAdapter { params }, &s, &BinFuture::basic(&s.law), &cfg);
            assert_eq!(native.taus, generic.taus);
            assert_eq!(native.cycles, generic.cycles);
            assert!(native.taus.len() > 10);
        }
    }

    #[test]
    fn the_past_event_gives_a_row_of_ones() {
        let s = DrivingStream::new(8, Law::Geometric { r: 0.5 });
        let k = 3;
        let cfg = BreakConfig::new(64, 20_000);
        let r = scan_bins_basic(&s, &BasicScanConfig::new(k, BinState::single()), &cfg).unwrap();
        assert!(r.cycles.len() > 20);
        for c in &r.cycles {
            let at_break = c.trace.last().unwrap();
            assert!(at_break[1..].iter().all(|&x| x == 1));
            assert!(c.gap() >= k as u64);
        }
        for c in r.cycles.iter().skip(1) {
            assert_eq!(c.trace[0], vec![1u64; k + 1]);
        }
    }

    #[test]
    fn occurrence_matches_the_product() {
        let s = DrivingStream::new(21, Law::Geometric { r: 0.5 });
        let (frac, undecided) = occurrence_fraction(&s, &BinFuture::basic(&s.law), 40_000, 64);
        assert!(undecided > 0);
        assert!((frac - geometric_target(0.5, 64)).abs() < 0.01);
        assert!((geometric_target(0.5, 64) - 0.288_788).abs() < 1e-6);
    }

    #[test]
    fn unit_gaps_occur() {
        let s = DrivingStream::new(4, Law::Geometric { r: 0.5 });
        let cfg = BreakConfig::new(64, 5000).with_traces(false);
        let r = scan_bins_basic(&s, &BasicScanConfig::new(0, BinState::single()), &cfg).unwrap();
        assert!(r.gaps().contains(&1));
    }
}
