//! Break times, cycles and cycle laws.
//!
//! A break time is an index `n` at which both a past event `H_n` and a
//! future event `F_n` occur. The scanner walks a process forward, checks
//! `H_n` from the state and probes `F_n` on the driving sequence up to a
//! finite horizon, and cuts the trajectory into cycles between successive
//! break times.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::Window;
use crate::stats::{self, StatsError, TestReport};

/// Errors raised by cycle-level analyses.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegenError {
    #[error("gap {gap} has positive empirical mass but Pr(E_0,{gap}) = 0")]
    Inconsistent { gap: u64 },
    #[error("need at least {need} cycles, got {got}")]
    TooFewCycles { need: usize, got: usize },
    #[error("functional reads outside its declared window in cycle {cycle} at step {step}")]
    Contract { cycle: usize, step: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Result of probing a future event up to a finite horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FutureVerdict {
    /// The event is known to occur.
    Occurs,
    /// The event is known to fail; the lag at which failure became certain.
    Fails(u64),
    /// Neither outcome was forced within the given horizon.
    Undecided(u64),
}

impl FutureVerdict {
    /// True for `Occurs` and `Fails`.
    pub fn is_decided(&self) -> bool {
        !matches!(self, FutureVerdict::Undecided(_))
    }
}

/// A stationary future event `F_n`, evaluated on `ξ_{n+1}, ξ_{n+2}, ...`.
///
/// Implementations must be monotone: once a verdict is decided at some
/// horizon it stays the same for every larger horizon.
pub trait FutureEvent: Sync {
    type Driving: ?Sized;

    /// Evaluate `F_n` reading at most `ξ_{n+1}..ξ_{n+horizon}`.
    fn evaluate(&self, driving: &Self::Driving, n: u64, horizon: u64) -> FutureVerdict;
}

/// A future event given by a one-symbol-at-a-time predicate.
pub trait IncrementalPredicate {
    type Symbol;

    /// Feed the symbol at lag `lag` (starting at 1); return a decided verdict
    /// or `None` to request more lookahead.
    fn feed(&mut self, lag: u64, symbol: Self::Symbol) -> Option<FutureVerdict>;
}

/// Run an incremental predicate against `symbol_at(lag)` up to `horizon`.
pub fn run_incremental<P: IncrementalPredicate>(
    mut pred: P,
    horizon: u64,
    mut symbol_at: impl FnMut(u64) -> P::Symbol,
) -> FutureVerdict {
    for lag in 1..=horizon {
        if let Some(v) = pred.feed(lag, symbol_at(lag)) {
            return v;
        }
    }
    FutureVerdict::Undecided(horizon)
}

/// How verdicts that are still undecided at the horizon are counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UndecidedPolicy {
    /// Count as the truncated event "no failure within the horizon".
    #[default]
    Truncate,
    /// Count as failure.
    TreatAsFails,
    /// Retry at doubled horizons up to `cap`, then truncate at `cap`.
    Escalate { cap: u64 },
}

/// Scanner parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakConfig {
    pub horizon: u64,
    pub min_separation: u64,
    pub max_time: u64,
    pub policy: UndecidedPolicy,
    pub collect_traces: bool,
    pub collect_segments: bool,
}

impl BreakConfig {
    /// Defaults: truncation policy, separation 1, traces on, segments off.
    pub fn new(horizon: u64, max_time: u64) -> Self {
        Self {
            horizon: horizon.max(1),
            min_separation: 1,
            max_time: max_time.max(1),
            policy: UndecidedPolicy::Truncate,
            collect_traces: true,
            collect_segments: false,
        }
    }

    /// Set the minimum distance between successive break times.
    pub fn with_min_separation(mut self, m: u64) -> Self {
        self.min_separation = m.max(1);
        self
    }

    /// Set the undecided policy.
    pub fn with_policy(mut self, policy: UndecidedPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Toggle trace collection.
    pub fn with_traces(mut self, on: bool) -> Self {
        self.collect_traces = on;
        self
    }

    /// Toggle segment materialization.
    pub fn with_segments(mut self, on: bool) -> Self {
        self.collect_segments = on;
        self
    }
}

/// Outcome of resolving a future event under a policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Resolution {
    pub occurs: bool,
    pub undecided: bool,
    pub horizon_used: u64,
}

/// Evaluate `F_n` and apply the undecided policy.
pub fn resolve<F: FutureEvent>(future: &F, driving: &F::Driving, n: u64, cfg: &BreakConfig) -> Resolution {
    let mut h = cfg.horizon;
    loop {
        match future.evaluate(driving, n, h) {
            FutureVerdict::Occurs => return Resolution { occurs: true, undecided: false, horizon_used: h },
            FutureVerdict::Fails(_) => return Resolution { occurs: false, undecided: false, horizon_used: h },
            FutureVerdict::Undecided(_) => match cfg.policy {
                UndecidedPolicy::Truncate => return Resolution { occurs: true, undecided: true, horizon_used: h },
                UndecidedPolicy::TreatAsFails => {
                    return Resolution { occurs: false, undecided: true, horizon_used: h }
                }
                UndecidedPolicy::Escalate { cap } => {
                    if h >= cap {
                        return Resolution { occurs: true, undecided: true, horizon_used: h };
                    }
                    h = (2 * h).min(cap);
                }
            },
        }
    }
}

/// A process driven by a stochastic recursion, exposing what the scanner needs.
pub trait ProcessAdapter {
    type Driving: ?Sized;
    type State: Clone;
    type Trace: Clone + Serialize;

    /// The state at time 0.
    fn initial(&self) -> Self::State;

    /// Move `state` from time `n` to time `n + 1` using `ξ_{n+1}`.
    fn advance(&self, driving: &Self::Driving, state: &mut Self::State, n: u64);

    /// The past event `H_n`, read off the state at time `n`.
    fn past(&self, state: &Self::State, n: u64) -> bool;

    /// The relative functional `R_i(X_{n+i}, X_n)`.
    fn functional(&self, base: &Self::State, current: &Self::State) -> Self::Trace;

    /// Optional materialization of `ξ_lo..ξ_hi`.
    fn segment(&self, _driving: &Self::Driving, _lo: u64, _hi: u64) -> Option<Window> {
        None
    }
}

/// One cycle between successive break times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cycle<T> {
    pub k: usize,
    pub tau_start: u64,
    pub tau_end: u64,
    pub segment: Option<Window>,
    pub trace: Vec<T>,
}

impl<T> Cycle<T> {
    /// `τ_{k+1} - τ_k`.
    pub fn gap(&self) -> u64 {
        self.tau_end - self.tau_start
    }
}

/// Everything a scan produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport<T> {
    pub taus: Vec<u64>,
    pub cycles: Vec<Cycle<T>>,
    /// The segment from 0 to `τ_0`, kept apart because its law differs.
    pub delayed: Option<Cycle<T>>,
    pub horizon: u64,
    pub max_time: u64,
    pub undecided: u64,
    pub probes: u64,
    pub diagnostic: Option<String>,
}

impl<T> ScanReport<T> {
    /// An empty report.
    pub fn empty(horizon: u64, max_time: u64) -> Self {
        Self {
            taus: Vec::new(),
            cycles: Vec::new(),
            delayed: None,
            horizon,
            max_time,
            undecided: 0,
            probes: 0,
            diagnostic: None,
        }
    }

    /// Gaps `τ_{k+1} - τ_k` in order.
    pub fn gaps(&self) -> Vec<u64> {
        self.taus.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Set the diagnostic when nothing was found.
    pub fn finish(mut self) -> Self {
        if self.taus.is_empty() {
            self.diagnostic = Some(format!("no break time found in [0, {}]", self.max_time));
        } else if self.taus.len() == 1 {
            self.diagnostic = Some("a single break time; no complete cycle".to_string());
        }
        self
    }
}

/// Incrementally assembles cycles from break times and per-step traces.
#[derive(Clone, Debug)]
pub struct CycleBuilder<T> {
    report: ScanReport<T>,
    open_trace: Vec<T>,
    open_start: u64,
    collect_traces: bool,
}

impl<T: Clone> CycleBuilder<T> {
    /// Start with no break time seen.
    pub fn new(horizon: u64, max_time: u64, collect_traces: bool) -> Self {
        Self { report: ScanReport::empty(horizon, max_time), open_trace: Vec::new(), open_start: 0, collect_traces }
    }

    /// The last recorded break time.
    pub fn last_tau(&self) -> Option<u64> {
        self.report.taus.last().copied()
    }

    /// Whether traces are being collected.
    pub fn collecting(&self) -> bool {
        self.collect_traces
    }

    /// Append one functional value to the currently open cycle.
    pub fn push_trace(&mut self, value: T) {
        if self.collect_traces {
            self.open_trace.push(value);
        }
    }

    /// Close the open cycle at break time `n`.
    pub fn record(&mut self, n: u64, segment: Option<Window>) {
        let trace = std::mem::take(&mut self.open_trace);
        match self.report.taus.last() {
            None => {
                self.report.delayed = Some(Cycle { k: 0, tau_start: 0, tau_end: n, segment, trace });
            }
            Some(&start) => {
                let k = self.report.cycles.len();
                self.report.cycles.push(Cycle { k, tau_start: start, tau_end: n, segment, trace });
            }
        }
        self.open_start = n;
        self.report.taus.push(n);
    }

    /// Count a probe and whether it ended undecided.
    pub fn note_probe(&mut self, undecided: bool) {
        self.report.probes += 1;
        if undecided {
            self.report.undecided += 1;
        }
    }

    /// Record the largest horizon used.
    pub fn note_horizon(&mut self, h: u64) {
        self.report.horizon = self.report.horizon.max(h);
    }

    /// Finish and return the report.
    pub fn finish(self) -> ScanReport<T> {
        self.report.finish()
    }
}

/// Scan `0..=cfg.max_time` for break times `A_n = H_n ∩ F_n`, thinned greedily
/// from the left so that successive break times are at least
/// `cfg.min_separation` apart.
pub fn scan_break_times<A, F>(
    adapter: &A,
    driving: &A::Driving,
    future: &F,
    cfg: &BreakConfig,
) -> ScanReport<A::Trace>
where
    A: ProcessAdapter,
    F: FutureEvent<Driving = A::Driving>,
{
    let mut builder = CycleBuilder::new(cfg.horizon, cfg.max_time, cfg.collect_traces);
    let mut state = adapter.initial();
    let mut base = state.clone();
    for n in 0..=cfg.max_time {
        if n > 0 {
            adapter.advance(driving, &mut state, n - 1);
            if cfg.collect_traces {
                builder.push_trace(adapter.functional(&base, &state));
            }
        }
        if let Some(last) = builder.last_tau() {
            if n < last + cfg.min_separation {
                continue;
            }
        }
        if !adapter.past(&state, n) {
            continue;
        }
        let res = resolve(future, driving, n, cfg);
        builder.note_probe(res.undecided);
        builder.note_horizon(res.horizon_used);
        if res.occurs {
            let segment = match (cfg.collect_segments, builder.last_tau()) {
                (true, Some(last)) => adapter.segment(driving, last + 1, n),
                (true, None) if n > 0 => adapter.segment(driving, 1, n),
                _ => None,
            };
            builder.record(n, segment);
            if cfg.collect_traces {
                base = state.clone();
            }
        }
    }
    builder.finish()
}

/// Recompute traces of a different functional along known break times.
pub fn functional_traces<A, T>(
    adapter: &A,
    driving: &A::Driving,
    taus: &[u64],
    functional: impl Fn(&A::State, &A::State) -> T,
) -> Vec<Vec<T>>
where
    A: ProcessAdapter,
{
    let mut out = Vec::new();
    if taus.len() < 2 {
        return out;
    }
    let mut state = adapter.initial();
    for n in 0..taus[0] {
        adapter.advance(driving, &mut state, n);
    }
    for w in taus.windows(2) {
        let base = state.clone();
        let mut trace = Vec::with_capacity((w[1] - w[0]) as usize);
        for n in w[0]..w[1] {
            adapter.advance(driving, &mut state, n);
            trace.push(functional(&base, &state));
        }
        out.push(trace);
    }
    out
}

/// Check that cycle traces do not change when the driving sequence is
/// replaced outside each cycle's declared window.
///
/// `alternate(j)` must return a driving that agrees with `driving` on
/// `ξ_{τ_j - memory + 1}..ξ_{τ_{j+1}}` and differs elsewhere.
pub fn check_trace_contract<A, T, D>(
    adapter: &A,
    driving: &A::Driving,
    taus: &[u64],
    functional: impl Fn(&A::State, &A::State) -> T,
    alternate: impl Fn(usize) -> D,
) -> Result<(), RegenError>
where
    A: ProcessAdapter,
    T: PartialEq,
    D: std::ops::Deref<Target = A::Driving>,
{
    let reference = functional_traces(adapter, driving, taus, &functional);
    for (j, w) in taus.windows(2).enumerate() {
        let alt = alternate(j);
        let mut state = adapter.initial();
        for n in 0..w[0] {
            adapter.advance(&alt, &mut state, n);
        }
        let base = state.clone();
        for (i, n) in (w[0]..w[1]).enumerate() {
            adapter.advance(&alt, &mut state, n);
            if functional(&base, &state) != reference[j][i] {
                return Err(RegenError::Contract { cycle: j, step: i + 1 });
            }
        }
    }
    Ok(())
}

/// Empirical cycle law and the proportionality check `Pr(gap = n) = a Pr(E_{0,n})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleLaw {
    pub cycles: usize,
    /// `gap_pmf[n - 1]` is the empirical probability of gap `n`.
    pub gap_pmf: Vec<f64>,
    /// `e_prob[n - 1]` is `Pr(E_{0,n})`.
    pub e_prob: Vec<f64>,
    /// Per-gap ratio `gap_pmf / e_prob` (NaN where `e_prob` is zero).
    pub ratio: Vec<f64>,
    pub a_hat: f64,
    pub a_ci: (f64, f64),
    /// Pearson statistic of observed gap counts against `N a Pr(E_{0,n})`.
    pub flatness_chi2: f64,
    pub flatness_dof: usize,
}

/// Build the empirical cycle law from gaps and an estimator of `Pr(E_{0,n})`.
pub fn cycle_law(gaps: &[u64], e_prob: impl Fn(u64) -> f64, min_cycles: usize) -> Result<CycleLaw, RegenError> {
    if gaps.len() < min_cycles {
        return Err(RegenError::TooFewCycles { need: min_cycles, got: gaps.len() });
    }
    let max_gap = gaps.iter().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0usize; max_gap];
    for &g in gaps {
        counts[g as usize - 1] += 1;
    }
    let n = gaps.len() as f64;
    let e: Vec<f64> = (1..=max_gap as u64).map(&e_prob).collect();
    for (i, (&c, &p)) in counts.iter().zip(&e).enumerate() {
        if c > 0 && p <= 0.0 {
            return Err(RegenError::Inconsistent { gap: i as u64 + 1 });
        }
    }
    let gap_pmf: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let ratio: Vec<f64> = gap_pmf.iter().zip(&e).map(|(g, p)| if *p > 0.0 { g / p } else { f64::NAN }).collect();
    let e_total: f64 = e.iter().sum();
    let a_hat = 1.0 / e_total;
    let se = (1.0 / n).sqrt() * a_hat;
    let z = stats::normal_quantile(0.95);
    let mut chi2 = 0.0;
    let mut dof = 0usize;
    for (&c, &p) in counts.iter().zip(&e) {
        let expected = n * a_hat * p;
        if expected >= 5.0 {
            chi2 += (c as f64 - expected).powi(2) / expected;
            dof += 1;
        }
    }
    Ok(CycleLaw {
        cycles: gaps.len(),
        gap_pmf,
        e_prob: e,
        ratio,
        a_hat,
        a_ci: (a_hat - z * se, a_hat + z * se),
        flatness_chi2: chi2,
        flatness_dof: dof.saturating_sub(1),
    })
}

/// Verdicts of the cycle i.i.d. suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidSuite {
    pub tests: Vec<TestReport>,
    pub features: Vec<String>,
    /// Per-test level after Bonferroni correction.
    pub level: f64,
    pub pass: bool,
}

/// Kolmogorov–Smirnov first-half vs second-half and adjacent-cycle
/// permutation tests for each named feature, Bonferroni-corrected over
/// all `2 × features` tests.
///
/// `lag` is the distance between the paired cycles (1 for i.i.d. checks,
/// 2 for one-dependence checks).
pub fn iid_suite(
    names: &[&str],
    features: &[Vec<f64>],
    alpha: f64,
    permutations: usize,
    max_pairs: usize,
    lag: usize,
    seed: u64,
) -> Result<IidSuite, RegenError> {
    let dims = names.len();
    let level = alpha / (2 * dims) as f64;
    let mut tests = Vec::new();
    for (c, name) in names.iter().enumerate() {
        let column: Vec<f64> = features.iter().map(|f| f[c]).collect();
        let half = column.len() / 2;
        let mut ks = stats::ks_two_sample(&column[..half], &column[half..], level)?;
        ks.name = format!("ks_half_{name}");
        tests.push(ks);
        let pairs_all: Vec<(f64, f64)> = column.windows(lag + 1).map(|w| (w[0], w[lag])).collect();
        let stride = pairs_all.len().div_ceil(max_pairs.max(1)).max(1);
        let pairs: Vec<(f64, f64)> = pairs_all.iter().step_by(stride).copied().collect();
        let mut perm = stats::permutation_independence_scalar(&pairs, permutations, seed ^ c as u64, level)?;
        perm.name = format!("perm_lag{lag}_{name}");
        tests.push(perm);
    }
    let pass = tests.iter().all(|t| !t.reject);
    Ok(IidSuite { tests, features: names.iter().map(|s| s.to_string()).collect(), level, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Counter;

    impl ProcessAdapter for Counter {
        type Driving = ();
        type State = u64;
        type Trace = u64;

        fn initial(&self) -> u64 {
            0
        }
        fn advance(&self, _: &(), state: &mut u64, _: u64) {
            *state += 1;
        }
        fn past(&self, _: &u64, _: u64) -> bool {
            true
        }
        fn functional(&self, base: &u64, current: &u64) -> u64 {
            current - base
        }
    }

    struct Always;

    impl FutureEvent for Always {
        type Driving = ();
        fn evaluate(&self, _: &(), _: u64, _: u64) -> FutureVerdict {
            FutureVerdict::Occurs
        }
    }

    struct Never;

    impl FutureEvent for Never {
        type Driving = ();
        fn evaluate(&self, _: &(), n: u64, horizon: u64) -> FutureVerdict {
            if n.is_multiple_of(2) {
                FutureVerdict::Undecided(horizon)
            } else {
                FutureVerdict::Fails(1)
            }
        }
    }

    #[test]
    fn always_true_breaks_everywhere() {
        let cfg = BreakConfig::new(10, 20);
        let r = scan_break_times(&Counter, &(), &Always, &cfg);
        assert_eq!(r.taus, (0..=20).collect::<Vec<_>>());
        assert!(r.cycles.iter().all(|c| c.gap() == 1 && c.trace == vec![1]));
        assert!(r.delayed.as_ref().unwrap().trace.is_empty());
    }

    #[test]
    fn separation_thins_greedily() {
        let cfg = BreakConfig::new(10, 20).with_min_separation(3);
        let r = scan_break_times(&Counter, &(), &Always, &cfg);
        assert_eq!(r.taus, vec![0, 3, 6, 9, 12, 15, 18]);
        assert!(r.cycles.iter().all(|c| c.trace == vec![1, 2, 3]));
    }

    #[test]
    fn undecided_policies() {
        let cfg = BreakConfig::new(4, 10);
        let r = scan_break_times(&Counter, &(), &Never, &cfg);
        assert_eq!(r.taus, vec![0, 2, 4, 6, 8, 10]);
        assert_eq!(r.undecided, 6);
        let r = scan_break_times(&Counter, &(), &Never, &cfg.clone().with_policy(UndecidedPolicy::TreatAsFails));
        assert!(r.taus.is_empty());
        assert!(r.diagnostic.is_some());
        let r = scan_break_times(&Counter, &(), &Never, &cfg.with_policy(UndecidedPolicy::Escalate { cap: 64 }));
        assert_eq!(r.horizon, 64);
    }

    #[test]
    fn cycle_law_of_deterministic_gaps() {
        let law = cycle_law(&[1; 200], |n| if n == 1 { 1.0 } else { 0.0 }, 100).unwrap();
        assert_eq!(law.gap_pmf, vec![1.0]);
        assert_eq!(law.a_hat, 1.0);
        assert_eq!(law.ratio, vec![1.0]);
    }

    #[test]
    fn cycle_law_detects_inconsistency() {
        let err = cycle_law(&[1, 2, 2], |n| if n == 1 { 1.0 } else { 0.0 }, 1).unwrap_err();
        assert_eq!(err, RegenError::Inconsistent { gap: 2 });
        assert!(matches!(cycle_law(&[1], |_| 1.0, 100), Err(RegenError::TooFewCycles { .. })));
    }

    #[test]
    fn functional_traces_replay() {
        let traces = functional_traces(&Counter, &(), &[2, 5, 6], |b, c| c - b);
        assert_eq!(traces, vec![vec![1, 2, 3], vec![1]]);
    }
}
