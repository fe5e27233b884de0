//! The infinite-bin model without mass at 1, driven through two coprime
//! ranks `i1 < i2`.
//!
//! A block `i2, j_1, ..., j_{m-1}, i2` of ranks forces the top bin to hold at
//! least `i1` particles whatever the configuration before it; a following
//! run of `i1`'s then writes `i1` into each of the top `k + 1` bins.

use std::collections::{BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::basic::{max_symbol, point_mass, BinFuture, BinState};
use super::BinsError;
use crate::core::DrivingStream;
use crate::regen::{resolve, BreakConfig, CycleBuilder, ScanReport};

/// Default bound on the word length explored by [`find_word`].
pub const DEFAULT_WORD_BOUND: usize = 20;

/// The top of a configuration as seen by ranks at most `i2`.
///
/// Bins are listed from the top. With `capped`, the configuration holds at
/// least `i2` particles and the last listed bin is cut so the listed total is
/// exactly `i2`; otherwise the list is the whole configuration.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct TopWindow {
    bins: Vec<u64>,
    capped: bool,
}

impl TopWindow {
    fn step(&self, xi: u64, i2: u64) -> TopWindow {
        let mut bins = self.bins.clone();
        if xi <= bins[0] {
            bins.insert(0, 1);
        } else {
            let mut cum = bins[0];
            let mut hit = None;
            for t in 1..bins.len() {
                cum += bins[t];
                if xi <= cum {
                    hit = Some(t - 1);
                    break;
                }
            }
            match hit {
                Some(t) => bins[t] += 1,
                None => *bins.last_mut().expect("nonempty") += 1,
            }
        }
        let mut out = TopWindow { bins, capped: self.capped };
        out.cap(i2);
        out
    }

    fn cap(&mut self, i2: u64) {
        let mut cum = 0;
        for t in 0..self.bins.len() {
            if cum + self.bins[t] >= i2 {
                self.bins[t] = i2 - cum;
                self.bins.truncate(t + 1);
                self.capped = true;
                return;
            }
            cum += self.bins[t];
        }
    }
}

/// Every top window: exact configurations with fewer than `i2` particles and
/// capped windows of exactly `i2`.
fn all_windows(i2: u64) -> BTreeSet<TopWindow> {
    fn compositions(total: u64, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if total == 0 {
            out.push(prefix.clone());
            return;
        }
        for part in 1..=total {
            prefix.push(part);
            compositions(total - part, prefix, out);
            prefix.pop();
        }
    }
    let mut out = BTreeSet::new();
    for total in 1..=i2 {
        let mut comps = Vec::new();
        compositions(total, &mut Vec::new(), &mut comps);
        for bins in comps {
            out.insert(TopWindow { bins, capped: total == i2 });
        }
    }
    out
}

/// A block `i2, j_1, ..., j_{m-1}, i2` that forces `x_0 ≥ i1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeWord {
    pub i1: u64,
    pub i2: u64,
    /// `j_1, ..., j_{m-1}`.
    pub inner: Vec<u64>,
}

impl PrimeWord {
    /// `m`: the block spans `m + 1` steps.
    pub fn m(&self) -> usize {
        self.inner.len() + 1
    }

    /// The full block of ranks.
    pub fn block(&self) -> Vec<u64> {
        let mut b = vec![self.i2];
        b.extend(&self.inner);
        b.push(self.i2);
        b
    }

    /// Smallest top-bin count left by the block over every starting configuration.
    pub fn worst_top(&self) -> u64 {
        let mut set = all_windows(self.i2);
        for &xi in &self.block() {
            set = set.iter().map(|w| w.step(xi, self.i2)).collect();
        }
        set.iter().map(|w| w.bins[0]).min().unwrap_or(0)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Breadth-first search over inner words in `{i1, i2}*` of length at most
/// `bound`, shortest first and `i1` before `i2`, for a block forcing `x_0 ≥ i1`.
pub fn find_word(i1: u64, i2: u64, bound: usize) -> Result<PrimeWord, BinsError> {
    if i1 <= 1 || i1 >= i2 || gcd(i1, i2) != 1 {
        return Err(BinsError::Pair { i1, i2 });
    }
    let start: BTreeSet<TopWindow> = all_windows(i2).iter().map(|w| w.step(i2, i2)).collect();
    let mut seen: HashSet<BTreeSet<TopWindow>> = HashSet::new();
    let mut queue: VecDeque<(Vec<u64>, BTreeSet<TopWindow>)> = VecDeque::new();
    seen.insert(start.clone());
    queue.push_back((Vec::new(), start));
    while let Some((inner, set)) = queue.pop_front() {
        if set.iter().all(|w| w.step(i2, i2).bins[0] >= i1) {
            return Ok(PrimeWord { i1, i2, inner });
        }
        if inner.len() == bound {
            continue;
        }
        for j in [i1, i2] {
            let next: BTreeSet<TopWindow> = set.iter().map(|w| w.step(j, i2)).collect();
            if seen.insert(next.clone()) {
                let mut word = inner.clone();
                word.push(j);
                queue.push_back((word, next));
            }
        }
    }
    Err(BinsError::SearchBound { bound })
}

/// Parameters of a mutually-prime scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimeScanConfig {
    pub i1: u64,
    pub i2: u64,
    /// Display depth `k`.
    pub k: usize,
    pub initial: BinState,
    /// Bound on the word search.
    pub word_bound: usize,
}

impl PrimeScanConfig {
    /// Defaults: single-particle start and the default word bound.
    pub fn new(i1: u64, i2: u64, k: usize) -> Self {
        Self { i1, i2, k, initial: BinState::single(), word_bound: DEFAULT_WORD_BOUND }
    }

    /// Length `r = i1 (k + 1)` of the run of `i1`'s after the block.
    pub fn run_length(&self) -> usize {
        self.i1 as usize * (self.k + 1)
    }
}

/// A mutually-prime scan with its exact checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimeScanReport {
    pub word: PrimeWord,
    /// Run length `r`.
    pub r: usize,
    pub scan: ScanReport<Vec<u64>>,
    /// Number of times `n` at which `H_n` occurred.
    pub past_hits: u64,
    /// Times at which `H_n` occurred but `X_n(-k)` was not all `i1`.
    pub violations: Vec<u64>,
    /// Smallest gap between successive break times.
    pub min_gap: Option<u64>,
    /// `r + i2 - i1`: no two break times may be this close or closer.
    pub excluded_gap: u64,
}

impl PrimeScanReport {
    /// True when the all-`i1` assertion and the gap exclusion both hold.
    pub fn exact_checks_pass(&self) -> bool {
        self.violations.is_empty() && self.min_gap.is_none_or(|g| g > self.excluded_gap)
    }
}

/// Scan `A_n = B_{n-r} ∩ D_n ∩ F_n` with `D_n` a run of `r` ranks `i1` and
/// `F_n = ⋂_{l ≥ 1} {ξ_{n+l} ≤ i1 + l - 1}`.
pub fn scan_bins_prime(
    driving: &DrivingStream,
    params: &PrimeScanConfig,
    cfg: &BreakConfig,
) -> Result<PrimeScanReport, BinsError> {
    let (i1, i2) = (params.i1, params.i2);
    let word = find_word(i1, i2, params.word_bound)?;
    let mass = |v: u64| point_mass(&driving.law, v as i64).ok_or_else(|| BinsError::Law("integer law required".into()));
    if mass(1)? > 0.0 {
        return Err(BinsError::Law("the extension assumes P(ξ = 1) = 0".into()));
    }
    if mass(i1)? <= 0.0 || mass(i2)? <= 0.0 {
        return Err(BinsError::Law(format!("both P(ξ = {i1}) and P(ξ = {i2}) must be positive")));
    }
    if !params.initial.is_valid() {
        return Err(BinsError::Law("initial configuration has an empty bin".into()));
    }
    let r = params.run_length();
    let mut pattern = word.block();
    pattern.extend(std::iter::repeat_n(i1, r));
    let span = pattern.len();
    let future = BinFuture { slack: i1 as i64 - 1, max_symbol: max_symbol(&driving.law) };
    let mut builder = CycleBuilder::new(cfg.horizon, cfg.max_time, cfg.collect_traces);
    let mut state = params.initial.clone();
    let mut recent: VecDeque<i64> = VecDeque::with_capacity(span + 1);
    let mut past_hits = 0;
    let mut violations = Vec::new();
    for n in 0..=cfg.max_time {
        if n > 0 {
            let xi = driving.int_at(n as i64);
            state.apply(xi.max(1) as u64);
            recent.push_back(xi);
            if recent.len() > span {
                recent.pop_front();
            }
            if builder.collecting() {
                builder.push_trace(state.window(params.k));
            }
        }
        let past = recent.len() == span && recent.iter().zip(&pattern).all(|(&x, &p)| x == p as i64);
        if !past {
            continue;
        }
        past_hits += 1;
        if state.window(params.k).iter().any(|&c| c != i1) {
            violations.push(n);
        }
        if builder.last_tau().is_some_and(|last| n < last + cfg.min_separation) {
            continue;
        }
        let res = resolve(&future, driving, n, cfg);
        builder.note_probe(res.undecided);
        builder.note_horizon(res.horizon_used);
        if res.occurs {
            builder.record(n, None);
        }
    }
    let scan = builder.finish();
    let min_gap = scan.gaps().into_iter().min();
    Ok(PrimeScanReport { word, r, scan, past_hits, violations, min_gap, excluded_gap: (r as u64) + i2 - i1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{hash_key, Alphabet, Law};

    fn prime_law() -> Law {
        Law::Finite(Alphabet::float(vec![2, 3, 5], vec![0.5, 0.3, 0.2]).unwrap())
    }

    #[test]
    fn windows_of_three() {
        assert_eq!(all_windows(3).len(), 7);
        let w = TopWindow { bins: vec![1, 2], capped: true };
        assert_eq!(w.step(1, 3), TopWindow { bins: vec![1, 1, 1], capped: true });
        assert_eq!(w.step(3, 3), TopWindow { bins: vec![2, 1], capped: true });
        let e = TopWindow { bins: vec![2], capped: false };
        assert_eq!(e.step(3, 3), TopWindow { bins: vec![3], capped: true });
    }

    #[test]
    fn windows_track_real_configurations() {
        for seed in 0..300u64 {
            let len = 1 + (hash_key(seed, 1, 0, 0) % 5) as usize;
            let counts: Vec<u64> = (0..len).map(|i| 1 + hash_key(seed, 2, i as i64, 0) % 4).collect();
            let mut x = BinState::new(counts.clone()).unwrap();
            let mut w = TopWindow { bins: counts.iter().rev().copied().collect(), capped: false };
            w.cap(5);
            for t in 0..30 {
                let xi = [2u64, 3, 5][(hash_key(seed, 3, t, 0) % 3) as usize];
                x.apply(xi);
                w = w.step(xi, 5);
                let listed: u64 = w.bins.iter().sum();
                let real: Vec<u64> = (0..w.bins.len()).map(|j| x.at(j)).collect();
                assert_eq!(real[..w.bins.len() - 1], w.bins[..w.bins.len() - 1]);
                if w.capped {
                    assert_eq!(listed, 5);
                    assert!(real[w.bins.len() - 1] >= *w.bins.last().unwrap());
                } else {
                    assert_eq!(real, w.bins);
                    assert_eq!(x.total(), listed);
                }
            }
        }
    }

    #[test]
    fn word_for_two_three() {
        let w = find_word(2, 3, DEFAULT_WORD_BOUND).unwrap();
        assert!(w.worst_top() >= 2);
        for seed in 0..2000u64 {
            let len = 1 + (hash_key(seed, 4, 0, 0) % 6) as usize;
            let counts: Vec<u64> = (0..len).map(|i| 1 + hash_key(seed, 5, i as i64, 0) % 5).collect();
            let mut x = BinState::new(counts).unwrap();
            for &xi in &w.block() {
                x.apply(xi);
            }
            assert!(x.top() >= 2);
        }
    }

    #[test]
    fn shorter_words_do_not_force() {
        let w = find_word(2, 3, DEFAULT_WORD_BOUND).unwrap();
        for len in 0..w.inner.len() {
            for code in 0..(1u32 << len) {
                let inner = (0..len).map(|b| if code >> b & 1 == 0 { 2 } else { 3 }).collect();
                assert!(PrimeWord { i1: 2, i2: 3, inner }.worst_top() < 2);
            }
        }
    }

    #[test]
    fn other_pairs() {
        for (i1, i2) in [(2, 5), (3, 4), (3, 5)] {
            let w = find_word(i1, i2, DEFAULT_WORD_BOUND).unwrap();
            assert!(w.worst_top() >= i1);
        }
        assert_eq!(find_word(2, 4, 20), Err(BinsError::Pair { i1: 2, i2: 4 }));
        assert_eq!(find_word(1, 3, 20), Err(BinsError::Pair { i1: 1, i2: 3 }));
    }

    #[test]
    fn scan_checks_are_exact() {
        let s = DrivingStream::new(12, prime_law());
        for k in [0usize, 1, 2] {
            let cfg = BreakConfig::new(64, 200_000).with_traces(false);
            let rep = scan_bins_prime(&s, &PrimeScanConfig::new(2, 3, k), &cfg).unwrap();
            assert!(rep.past_hits > 20, "k = {k}: {} hits", rep.past_hits);
            assert!(rep.scan.taus.len() > 10);
            assert!(rep.exact_checks_pass(), "{:?} {:?}", rep.violations, rep.min_gap);
            assert_eq!(rep.scan.undecided, 0);
        }
    }

    #[test]
    fn law_preconditions() {
        let s = DrivingStream::new(1, Law::Geometric { r: 0.5 });
        assert!(scan_bins_prime(&s, &PrimeScanConfig::new(2, 3, 0), &BreakConfig::new(8, 10)).is_err());
        let a = Law::Finite(Alphabet::float(vec![2, 5], vec![0.5, 0.5]).unwrap());
        let s = DrivingStream::new(1, a);
        assert!(scan_bins_prime(&s, &PrimeScanConfig::new(2, 3, 0), &BreakConfig::new(8, 10)).is_err());
    }
}
