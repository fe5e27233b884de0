//! The skip-free two-state contact process and its Kuczek regeneration.
//!
//! A configuration stores only sites of the parity of its right endpoint:
//! bit `j` of the occupancy vector is site `r - 2j`.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{survival_estimate, Bits, ContactDriving, ContactError, SurvivalEstimate};
use crate::regen::{CycleBuilder, FutureEvent, FutureVerdict, ProcessAdapter, ScanReport};
use crate::stats::{geometric_tail_fit, mean_var, renewal_reward, RateEstimate, TailFit};

/// Default width cap, in site offsets.
pub const DEFAULT_WIDTH_CAP: usize = 1 << 16;

/// A two-state configuration seen from its right endpoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeConfig2 {
    /// Right endpoint `r_n` (meaningless once extinct).
    pub r: i64,
    /// Bit `j` set when site `r - 2j` is infected.
    pub occupied: Bits,
    pub extinct: bool,
    /// Width cap in site offsets.
    pub width_cap: usize,
    /// Number of steps at which occupied sites fell beyond the cap.
    pub truncations: u64,
}

impl LatticeConfig2 {
    /// The single infected site `r`.
    pub fn single(r: i64, width_cap: usize) -> Self {
        Self { r, occupied: Bits::unit(), extinct: false, width_cap, truncations: 0 }
    }

    /// A configuration from sites of one parity; `None` when empty or mixed.
    pub fn from_sites(sites: &BTreeSet<i64>, width_cap: usize) -> Option<Self> {
        let r = *sites.iter().next_back()?;
        let mut occupied = Bits::default();
        for &x in sites {
            if (r - x) % 2 != 0 {
                return None;
            }
            occupied.set(((r - x) / 2) as usize, true);
        }
        Some(Self { r, occupied, extinct: false, width_cap, truncations: 0 })
    }

    /// Infected sites in increasing order.
    pub fn sites(&self) -> BTreeSet<i64> {
        if self.extinct {
            return BTreeSet::new();
        }
        let mut out = BTreeSet::new();
        for (w, &word) in self.occupied.words.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let j = w * 64 + bits.trailing_zeros() as usize;
                out.insert(self.r - 2 * j as i64);
                bits &= bits - 1;
            }
        }
        out
    }

    /// Number of infected sites.
    pub fn size(&self) -> usize {
        if self.extinct {
            0
        } else {
            self.occupied.count()
        }
    }

    fn cap_bits(&self) -> usize {
        self.width_cap / 2 + 1
    }

    /// One step from time `n` to `n + 1` using `ξ_{n+1}`.
    pub fn step(&mut self, driving: &ContactDriving, n: u64) {
        if self.extinct {
            return;
        }
        let words = &mut self.occupied.words;
        let mut carry = 0u64;
        for w in 0..words.len() {
            let x = words[w];
            if x == 0 {
                words[w] = carry;
                carry = 0;
                continue;
            }
            let (l, r) = driving.lr_words(n + 1, w as u64);
            let xl = x & l;
            words[w] = (x & r) | (xl << 1) | carry;
            carry = xl >> 63;
        }
        if carry != 0 {
            words.push(carry);
        }
        self.occupied.trim();
        match self.occupied.lowest() {
            None => self.extinct = true,
            Some(k) => {
                self.r += 1 - 2 * k as i64;
                self.occupied.shift_down(k);
                let cap = self.cap_bits();
                if self.occupied.highest().is_some_and(|h| h >= cap) {
                    self.occupied.truncate(cap);
                    self.truncations += 1;
                }
            }
        }
    }
}

/// Apply one step to `cfg` (convenience form of [`LatticeConfig2::step`]).
pub fn step2(cfg: &LatticeConfig2, driving: &ContactDriving, n: u64) -> LatticeConfig2 {
    let mut next = cfg.clone();
    next.step(driving, n);
    next
}

/// How the reference stepper indexes descendant sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Keying {
    /// `η_{n+1,x} = ξ_{n+1, x - r_n}`, as in the bitset stepper.
    Relative,
    /// `η_{n+1,x}` drawn from the absolute site `x`.
    Absolute,
}

/// Site-by-site reference step on an explicit set of sites.
///
/// Relative keying needs all sites to share the parity of the right endpoint.
pub fn step2_sites(sites: &BTreeSet<i64>, driving: &ContactDriving, n: u64, keying: Keying) -> BTreeSet<i64> {
    let mut out = BTreeSet::new();
    let Some(&r) = sites.iter().next_back() else {
        return out;
    };
    for &x in sites {
        let (left, right) = match keying {
            Keying::Relative => {
                assert!((r - x) % 2 == 0, "relative keying needs sites of one parity");
                driving.lr_bit(n + 1, ((r - x) / 2) as u64)
            }
            Keying::Absolute => driving.lr_absolute(n + 1, x),
        };
        if left {
            out.insert(x - 1);
        }
        if right {
            out.insert(x + 1);
        }
    }
    out
}

/// Run `X^A` (a configuration with right endpoint 0 started at time `n`) and
/// `X^{(n)}` from `{0}` together for up to `steps` steps and check that their
/// right endpoints agree while `X^{(n)}` survives.
///
/// Returns the number of steps checked, or the first step where they differ.
pub fn coupling_check2(driving: &ContactDriving, left: &LatticeConfig2, n: u64, steps: u64) -> Result<u64, u64> {
    let mut a = left.clone();
    a.r = 0;
    a.width_cap = usize::MAX / 4;
    let mut single = LatticeConfig2::single(0, usize::MAX / 4);
    for s in 0..steps {
        a.step(driving, n + s);
        single.step(driving, n + s);
        if single.extinct {
            return Ok(s);
        }
        if a.extinct || a.r != single.r {
            return Err(s + 1);
        }
    }
    Ok(steps)
}

/// Check `r^{(n)}_{n+m+i} = r^{(n)}_{n+m} + r^{(n+m)}_{n+m+i}` for
/// `i = 1..=steps` while both processes survive.
///
/// Returns the number of indices checked, or the first failing `(n + m, i)`.
pub fn shift_identity_check(driving: &ContactDriving, n: u64, m: u64, steps: u64) -> Result<usize, (u64, u64)> {
    let outer = right_endpoint_path(driving, n, m + steps);
    if outer.len() < m as usize {
        return Ok(0);
    }
    let base = if m == 0 { 0 } else { outer[m as usize - 1] };
    let inner = right_endpoint_path(driving, n + m, steps);
    let mut count = 0;
    for (i, r) in inner.iter().enumerate() {
        match outer.get(m as usize + i) {
            Some(&v) if v == base + r => count += 1,
            Some(_) => return Err((n + m, i as u64 + 1)),
            None => break,
        }
    }
    Ok(count)
}

/// Outcome of one survival probe of `X^{(n)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub verdict: FutureVerdict,
    /// `r^{(n)}_{n+i}` for `i = 1, 2, ...` while alive, up to the horizon.
    pub path: Vec<i64>,
}

/// Run `X^{(n)}` from `{0}` for up to `horizon` steps.
///
/// The width cap is set to `2 horizon`, so no truncation can occur.
pub fn survival_probe(driving: &ContactDriving, n: u64, horizon: u64, keep_path: bool) -> ProbeResult {
    let mut cfg = LatticeConfig2::single(0, 2 * horizon as usize);
    let mut path = Vec::new();
    for s in 0..horizon {
        cfg.step(driving, n + s);
        if cfg.extinct {
            return ProbeResult { verdict: FutureVerdict::Fails(s + 1), path };
        }
        if keep_path {
            path.push(cfg.r);
        }
    }
    ProbeResult { verdict: FutureVerdict::Undecided(horizon), path }
}

/// `r^{(n)}_{n+i}` for `i = 1..=steps`, stopping early at extinction.
pub fn right_endpoint_path(driving: &ContactDriving, n: u64, steps: u64) -> Vec<i64> {
    let mut cfg = LatticeConfig2::single(0, 2 * steps as usize);
    let mut path = Vec::with_capacity(steps as usize);
    for s in 0..steps {
        cfg.step(driving, n + s);
        if cfg.extinct {
            break;
        }
        path.push(cfg.r);
    }
    path
}

/// `F_n`: the process started from a single site at time `n` survives.
#[derive(Clone, Copy, Debug, Default)]
pub struct SurvivalFuture;

impl FutureEvent for SurvivalFuture {
    type Driving = ContactDriving;

    fn evaluate(&self, driving: &ContactDriving, n: u64, horizon: u64) -> FutureVerdict {
        survival_probe(driving, n, horizon, false).verdict
    }
}

/// Adapter for the generic scanner: the past event is trivial and the trace
/// is the elapsed time, so scans agree on break times only.
#[derive(Clone, Copy, Debug, Default)]
pub struct ClockAdapter;

impl ProcessAdapter for ClockAdapter {
    type Driving = ContactDriving;
    type State = u64;
    type Trace = u64;

    fn initial(&self) -> u64 {
        0
    }

    fn advance(&self, _: &ContactDriving, state: &mut u64, _: u64) {
        *state += 1;
    }

    fn past(&self, _: &u64, _: u64) -> bool {
        true
    }

    fn functional(&self, base: &u64, current: &u64) -> u64 {
        current - base
    }
}

/// Parameters of a Kuczek scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KuczekConfig {
    /// Probe horizon `T`.
    pub horizon: u64,
    /// Last candidate time `N`.
    pub max_time: u64,
    /// Width cap `W`; must be at least `2T`.
    pub width_cap: usize,
    pub collect_traces: bool,
}

impl KuczekConfig {
    /// Horizon `T`, last time `N`, default width cap, traces on.
    pub fn new(horizon: u64, max_time: u64) -> Self {
        Self { horizon, max_time, width_cap: DEFAULT_WIDTH_CAP, collect_traces: true }
    }
}

/// A Kuczek scan with the extinction lags of its failed probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KuczekReport {
    /// Cycles with trace `R_i = r^{(τ_k)}_{τ_k + i}`.
    pub scan: ScanReport<i64>,
    pub extinction_lags: Vec<u64>,
}

/// Break times `A_n = F_n` of the two-state process.
///
/// A probe at a candidate `n` that dies at `d` rules out every candidate in
/// `(n, d)`, because those processes are contained in `X^{(n)}`; the scan
/// resumes at `d`.
pub fn kuczek_scan(driving: &ContactDriving, cfg: &KuczekConfig) -> Result<KuczekReport, ContactError> {
    if (cfg.width_cap as u64) < 2 * cfg.horizon {
        return Err(ContactError::WidthCap { cap: cfg.width_cap, horizon: cfg.horizon });
    }
    let mut builder = CycleBuilder::new(cfg.horizon, cfg.max_time, cfg.collect_traces);
    let mut lags = Vec::new();
    let mut last_path: Vec<i64> = Vec::new();
    let mut n = 0u64;
    while n <= cfg.max_time {
        let probe = survival_probe(driving, n, cfg.horizon, cfg.collect_traces);
        match probe.verdict {
            FutureVerdict::Fails(lag) => {
                builder.note_probe(false);
                lags.push(lag);
                n += lag;
            }
            _ => {
                builder.note_probe(true);
                if let Some(prev) = builder.last_tau() {
                    if builder.collecting() {
                        let gap = (n - prev) as usize;
                        let path = if gap <= last_path.len() {
                            last_path[..gap].to_vec()
                        } else {
                            right_endpoint_path(driving, prev, gap as u64)
                        };
                        for v in path {
                            builder.push_trace(v);
                        }
                    }
                }
                builder.record(n, None);
                last_path = probe.path;
                n += 1;
            }
        }
    }
    Ok(KuczekReport { scan: builder.finish(), extinction_lags: lags })
}

/// Survival fractions of independent probes at nested horizons.
///
/// Probe `k` starts at time `k (T_max + 1)`, so probes use disjoint parts of
/// the driving sequence.
pub fn estimate_survival(driving: &ContactDriving, horizons: &[u64], probes: usize) -> SurvivalEstimate {
    let t_max = horizons.iter().copied().max().unwrap_or(1);
    let deaths: Vec<Option<u64>> = (0..probes as u64)
        .into_par_iter()
        .map(|k| match survival_probe(driving, k * (t_max + 1), t_max, false).verdict {
            FutureVerdict::Fails(lag) => Some(lag),
            _ => None,
        })
        .collect();
    survival_estimate(horizons, &deaths)
}

/// Speed and diffusion estimates from cycles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    /// `μ̂ = E[reward] / E[gap]` with its confidence interval.
    pub speed: RateEstimate,
    /// `σ̂² = Var(reward - μ̂ gap) / E[gap]`.
    pub diffusion: f64,
    pub mean_gap: f64,
    pub gap_std_error: f64,
}

/// Renewal-reward speed with the endpoint increment over each cycle as reward.
pub fn speed_and_diffusion(scan: &ScanReport<i64>, level: f64) -> Result<SpeedEstimate, ContactError> {
    let cycles: Vec<_> = scan.cycles.iter().filter(|c| c.trace.len() as u64 == c.gap()).collect();
    if cycles.len() < 2 {
        return Err(ContactError::TooFewCycles { need: 2, got: cycles.len() });
    }
    let gaps: Vec<f64> = cycles.iter().map(|c| c.gap() as f64).collect();
    let rewards: Vec<f64> = cycles.iter().map(|c| *c.trace.last().unwrap_or(&0) as f64).collect();
    let speed = renewal_reward(&gaps, &rewards, level)
        .map_err(|_| ContactError::TooFewCycles { need: 2, got: cycles.len() })?;
    let (mean_gap, var_gap) = mean_var(&gaps);
    let centred: Vec<f64> = gaps.iter().zip(&rewards).map(|(g, w)| w - speed.rate * g).collect();
    let (_, var_c) = mean_var(&centred);
    Ok(SpeedEstimate {
        speed,
        diffusion: var_c / mean_gap,
        mean_gap,
        gap_std_error: (var_gap / gaps.len() as f64).sqrt(),
    })
}

/// Tail fit of the cycle lengths.
pub fn gap_tail(scan: &ScanReport<i64>) -> Option<TailFit> {
    geometric_tail_fit(&scan.gaps()).ok()
}

/// Variance of normalised endpoint increments at two time scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltCheck {
    pub n: u64,
    /// Sample variance of `(r_{2n} - r_n) / √n`.
    pub var_n: f64,
    /// Sample variance of `(r_{4n} - r_{2n}) / √(2n)`.
    pub var_2n: f64,
    pub replicas: usize,
    pub survivors: usize,
    /// `|var_2n / var_n - 1|`.
    pub relative_change: f64,
}

/// Run single-site replicas to `4n`, keep survivors, and compare the
/// variance of normalised increments at scales `n` and `2n`.
pub fn clt_variance_check(driving: &ContactDriving, n: u64, replicas: usize) -> CltCheck {
    let rows: Vec<Option<(f64, f64)>> = (0..replicas as u64)
        .into_par_iter()
        .map(|k| {
            let d = driving.reseed(crate::core::mix64(driving.seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            let path = right_endpoint_path(&d, 0, 4 * n);
            if path.len() < (4 * n) as usize {
                return None;
            }
            let at = |t: u64| path[(t - 1) as usize] as f64;
            Some(((at(2 * n) - at(n)) / (n as f64).sqrt(), (at(4 * n) - at(2 * n)) / ((2 * n) as f64).sqrt()))
        })
        .collect();
    let kept: Vec<(f64, f64)> = rows.into_iter().flatten().collect();
    let a: Vec<f64> = kept.iter().map(|p| p.0).collect();
    let b: Vec<f64> = kept.iter().map(|p| p.1).collect();
    let (_, var_n) = mean_var(&a);
    let (_, var_2n) = mean_var(&b);
    CltCheck {
        n,
        var_n,
        var_2n,
        replicas,
        survivors: kept.len(),
        relative_change: if var_n > 0.0 { (var_2n / var_n - 1.0).abs() } else { f64::INFINITY },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::DescendantLaw;
    use crate::regen::{scan_break_times, BreakConfig};

    fn fixture(seed: u64) -> ContactDriving {
        ContactDriving::nearest_neighbour(seed, 0.75, 1.0).unwrap()
    }

    #[test]
    fn right_only_law_moves_one_step() {
        let law = DescendantLaw { p_none: 0.0, p_left: 0.0, p_right: 1.0, p_both: 0.0 };
        let d = ContactDriving::new(1, law, 1.0).unwrap();
        let cfg = step2(&LatticeConfig2::single(5, 64), &d, 0);
        assert_eq!((cfg.r, cfg.size()), (6, 1));
        let probe = survival_probe(&d, 3, 50, true);
        assert_eq!(probe.verdict, FutureVerdict::Undecided(50));
        assert_eq!(probe.path, (1..=50).collect::<Vec<i64>>());
    }

    #[test]
    fn empty_law_dies_at_once() {
        let law = DescendantLaw { p_none: 1.0, p_left: 0.0, p_right: 0.0, p_both: 0.0 };
        let d = ContactDriving::new(1, law, 1.0).unwrap();
        assert!(step2(&LatticeConfig2::single(0, 64), &d, 0).extinct);
    }

    #[test]
    fn one_step_extinction_matches_empty_mass() {
        let d = ContactDriving::nearest_neighbour(9, 0.5, 1.0).unwrap();
        let dead = (0..40_000u64).filter(|&n| step2(&LatticeConfig2::single(0, 64), &d, n).extinct).count();
        assert!((dead as f64 / 40_000.0 - 0.25).abs() < 0.01);
    }

    #[test]
    fn bitset_step_matches_reference() {
        let d = fixture(3);
        let mut cfg = LatticeConfig2::single(0, DEFAULT_WIDTH_CAP);
        let mut sites = cfg.sites();
        for n in 0..400 {
            cfg.step(&d, n);
            sites = step2_sites(&sites, &d, n, Keying::Relative);
            assert_eq!(cfg.sites(), sites, "step {n}");
            assert!(cfg.r <= 1 + n as i64);
            if cfg.extinct {
                break;
            }
        }
    }

    #[test]
    fn skip_free_bound() {
        let d = fixture(4);
        let mut cfg = LatticeConfig2::single(0, DEFAULT_WIDTH_CAP);
        for n in 0..2_000 {
            let r = cfg.r;
            cfg.step(&d, n);
            if cfg.extinct {
                break;
            }
            assert!(cfg.r <= r + 1);
        }
    }

    #[test]
    fn monotone_under_absolute_keying() {
        let d = fixture(12);
        let mut small: BTreeSet<i64> = [0, -4].into_iter().collect();
        let mut big: BTreeSet<i64> = [0, -4, -6, 2, -11].into_iter().collect();
        for n in 0..300 {
            small = step2_sites(&small, &d, n, Keying::Absolute);
            big = step2_sites(&big, &d, n, Keying::Absolute);
            assert!(small.is_subset(&big));
        }
    }

    #[test]
    fn kuczek_matches_generic_scanner() {
        let d = fixture(21);
        let cfg = KuczekConfig::new(200, 3_000);
        let fast = kuczek_scan(&d, &cfg).unwrap();
        let generic = scan_break_times(&ClockAdapter, &d, &SurvivalFuture, &BreakConfig::new(200, 3_000));
        assert_eq!(fast.scan.taus, generic.taus);
        assert!(fast.scan.taus.len() > 100);
    }

    #[test]
    fn traces_follow_probe_paths() {
        let d = fixture(5);
        let rep = kuczek_scan(&d, &KuczekConfig::new(100, 2_000)).unwrap();
        for c in &rep.scan.cycles {
            assert_eq!(c.trace, right_endpoint_path(&d, c.tau_start, c.gap()));
        }
    }

    #[test]
    fn width_cap_is_enforced() {
        let mut cfg = KuczekConfig::new(100, 10);
        cfg.width_cap = 150;
        assert!(kuczek_scan(&fixture(1), &cfg).is_err());
    }

    #[test]
    fn truncation_is_logged() {
        let law = DescendantLaw { p_none: 0.0, p_left: 0.0, p_right: 0.0, p_both: 1.0 };
        let d = ContactDriving::new(1, law, 1.0).unwrap();
        let mut cfg = LatticeConfig2::single(0, 20);
        for n in 0..30 {
            cfg.step(&d, n);
        }
        assert_eq!(cfg.r, 30);
        assert!(cfg.truncations > 0);
        assert_eq!(cfg.size(), 11);
    }

    #[test]
    fn deterministic_right_walk_has_unit_speed() {
        let law = DescendantLaw { p_none: 0.0, p_left: 0.0, p_right: 1.0, p_both: 0.0 };
        let d = ContactDriving::new(1, law, 1.0).unwrap();
        let rep = kuczek_scan(&d, &KuczekConfig::new(10, 500)).unwrap();
        let s = speed_and_diffusion(&rep.scan, 0.95).unwrap();
        assert_eq!(s.speed.rate, 1.0);
        assert_eq!(s.diffusion, 0.0);
    }

    #[test]
    fn coupling_and_shift_identities_hold() {
        let d = fixture(9);
        let mut rng = 0x1234_5678u64;
        for n in 0..40u64 {
            rng = crate::core::mix64(rng);
            let mut sites: BTreeSet<i64> = (1..20).filter(|j| (rng >> j) & 1 == 1).map(|j| -2 * j).collect();
            sites.insert(0);
            let left = LatticeConfig2::from_sites(&sites, 1 << 12).unwrap();
            assert!(coupling_check2(&d, &left, 7 * n, 300).is_ok());
            assert!(shift_identity_check(&d, 7 * n, 1 + n % 13, 300).is_ok());
        }
    }

    #[test]
    fn subcritical_probes_fail() {
        let d = ContactDriving::nearest_neighbour(2, 0.4, 1.0).unwrap();
        let est = estimate_survival(&d, &[100, 200, 400], 500);
        assert!(est.fractions[2] < 0.01);
    }
}
