//! The three-state contact process with immunisation.
//!
//! Site states are `-1` (never infected), `0` (infected before, not now) and
//! `1` (infected). A configuration keeps an anchor `A`, the rightmost site
//! ever infected; every site right of `A` is `-1`. Bit `d` of the planes
//! `inf` and `never` describes site `A - d`; sites beyond the stored planes
//! on the left are `0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Bits, ContactDriving, ContactError};
use crate::regen::{CycleBuilder, FutureEvent, FutureVerdict, ProcessAdapter, ScanReport};

/// Default window of the `Z_-` started process, in site offsets.
pub const DEFAULT_BAR_WINDOW: usize = 2048;

/// A three-state configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeConfig3 {
    /// Rightmost site ever infected.
    pub anchor: i64,
    /// Bit `d` set when site `anchor - d` is infected.
    pub inf: Bits,
    /// Bit `d` set when site `anchor - d` was never infected.
    pub never: Bits,
    /// Current time.
    pub time: u64,
    /// Time at which the configuration had its initial parity.
    pub origin: u64,
    pub extinct: bool,
    /// Infected sites more than this many offsets left of `r` are set to `0`.
    pub width_cap: usize,
    pub truncations: u64,
}

impl LatticeConfig3 {
    /// `X^{(n)}_n`: `1` at `0`, `0` to the left, `-1` to the right.
    pub fn single(n: u64, width_cap: usize) -> Self {
        Self {
            anchor: 0,
            inf: Bits::unit(),
            never: Bits::default(),
            time: n,
            origin: n,
            extinct: false,
            width_cap,
            truncations: 0,
        }
    }

    /// The `Z_-` started process at time 0, restricted to a window: even
    /// `x ∈ [-2m, 0]` infected, every other `x ≤ 0` in state `0`, `x > 0`
    /// never infected.
    pub fn z_minus(m: usize, width_cap: usize) -> Self {
        let mut inf = Bits::default();
        for k in 0..=m {
            inf.set(2 * k, true);
        }
        Self { anchor: 0, inf, never: Bits::default(), time: 0, origin: 0, extinct: false, width_cap, truncations: 0 }
    }

    /// A configuration `\hat X^{(n)}_n` with `1` at `0`, `-1` to the right,
    /// and `left[k]` the state of site `-1 - k`; sites further left are `0`.
    ///
    /// Returns `None` when a `1` sits on an odd site or a state is not in `{-1, 0, 1}`.
    pub fn hat(n: u64, left: &[i8], width_cap: usize) -> Option<Self> {
        let mut cfg = Self::single(n, width_cap);
        for (k, &s) in left.iter().enumerate() {
            let d = k + 1;
            match s {
                1 if d % 2 == 0 => cfg.inf.set(d, true),
                -1 => cfg.never.set(d, true),
                0 => {}
                _ => return None,
            }
        }
        Some(cfg)
    }

    /// Right endpoint `r_n`, or `None` once extinct.
    pub fn r(&self) -> Option<i64> {
        if self.extinct {
            return None;
        }
        self.inf.lowest().map(|d| self.anchor - d as i64)
    }

    /// Left endpoint `l_n`, or `None` once extinct.
    pub fn l(&self) -> Option<i64> {
        if self.extinct {
            return None;
        }
        self.inf.highest().map(|d| self.anchor - d as i64)
    }

    /// The state of site `x`.
    pub fn state(&self, x: i64) -> i8 {
        if x > self.anchor {
            return -1;
        }
        let d = (self.anchor - x) as usize;
        if self.inf.get(d) {
            1
        } else if self.never.get(d) {
            -1
        } else {
            0
        }
    }

    /// States of sites `lo..=hi`.
    pub fn states(&self, lo: i64, hi: i64) -> Vec<i8> {
        (lo..=hi).map(|x| self.state(x)).collect()
    }

    /// `H_n`: every site right of `r_n` is never infected, i.e. `r_n` is a record.
    pub fn at_record(&self) -> bool {
        !self.extinct && self.inf.lowest() == Some(0)
    }

    /// Infected sites all satisfy `time - origin + x` even.
    pub fn parity_ok(&self) -> bool {
        let base = (self.time - self.origin) as i64 + self.anchor;
        self.inf.words.iter().enumerate().all(|(w, &word)| {
            let mut bits = word;
            while bits != 0 {
                let d = (w * 64 + bits.trailing_zeros() as usize) as i64;
                if (base - d).rem_euclid(2) != 0 {
                    return false;
                }
                bits &= bits - 1;
            }
            true
        })
    }

    /// No never-infected site at or left of `r`, and nothing but `0` left of `l`.
    pub fn satisfies_envelope(&self) -> bool {
        match self.inf.lowest() {
            None => true,
            Some(dr) => self.never.highest().is_none_or(|h| h < dr),
        }
    }

    /// One step from `time` to `time + 1` using `ξ'_{time+1}` and `I_{time+1}`.
    pub fn step(&mut self, driving: &ContactDriving) {
        let step = self.time + 1;
        self.time = step;
        if self.extinct {
            return;
        }
        self.inf.shift_up(1);
        self.never.shift_up(1);
        self.never.set(0, true);
        let (dr, hi) = match (self.inf.lowest(), self.inf.highest()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                self.extinct = true;
                return;
            }
        };
        let jwords = (hi - dr) / 2 / 64 + 1;
        let mut ls = Vec::with_capacity(jwords);
        let mut rs = Vec::with_capacity(jwords);
        for w in 0..jwords as u64 {
            let (l, r) = driving.lr_words(step, w);
            ls.push(l);
            rs.push(r);
        }
        let mut right = self.inf.and(&Bits::spread_from(&rs, dr));
        right.shift_down(1);
        let mut left = self.inf.and(&Bits::spread_from(&ls, dr));
        left.shift_up(1);
        let y = right.or(&left);
        let new_inf = match (y.lowest(), y.highest()) {
            (Some(d2), Some(h2)) => {
                let iw: Vec<u64> = (0..((h2 - d2) / 2 / 64 + 1) as u64).map(|w| driving.i_word(step, w)).collect();
                let iexp = Bits::spread_from(&iw, d2);
                y.and(&self.never.or(&iexp))
            }
            _ => Bits::default(),
        };
        self.never = self.never.and_not(&y);
        self.inf = new_inf;
        if self.never.get(0) {
            self.inf.shift_down(1);
            self.never.shift_down(1);
        } else {
            self.anchor += 1;
        }
        match self.inf.lowest() {
            None => self.extinct = true,
            Some(lo) => {
                let cap = lo + self.width_cap + 1;
                if self.inf.highest().is_some_and(|h| h >= cap) {
                    self.inf.truncate(cap);
                    self.truncations += 1;
                }
            }
        }
    }
}

/// Apply one step to `cfg` at time `n` (which must be the configuration's time).
pub fn step3(cfg: &LatticeConfig3, driving: &ContactDriving, n: u64) -> LatticeConfig3 {
    assert_eq!(cfg.time, n, "configuration is at time {}, not {n}", cfg.time);
    let mut next = cfg.clone();
    next.step(driving);
    next
}

/// Outcome of one three-state survival probe of `X^{(n)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe3 {
    pub verdict: FutureVerdict,
    /// `r^{(n)}_{n+i}` for `i = 1, 2, ...` while alive, up to the horizon.
    pub path: Vec<i64>,
}

/// Run the three-state `X^{(n)}` for up to `horizon` steps.
pub fn survival_probe3(driving: &ContactDriving, n: u64, horizon: u64, keep_path: bool) -> Probe3 {
    let mut cfg = LatticeConfig3::single(n, 2 * horizon as usize);
    let mut path = Vec::new();
    for s in 0..horizon {
        cfg.step(driving);
        match cfg.r() {
            None => return Probe3 { verdict: FutureVerdict::Fails(s + 1), path },
            Some(r) if keep_path => path.push(r),
            _ => {}
        }
    }
    Probe3 { verdict: FutureVerdict::Undecided(horizon), path }
}

/// `r^{(n)}_{n+i}` for `i = 1..=steps` in the three-state process, stopping at extinction.
pub fn right_endpoint_path3(driving: &ContactDriving, n: u64, steps: u64) -> Vec<i64> {
    let mut cfg = LatticeConfig3::single(n, 2 * steps as usize);
    let mut path = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        cfg.step(driving);
        match cfg.r() {
            Some(r) => path.push(r),
            None => break,
        }
    }
    path
}

/// `F_n` for the three-state process.
#[derive(Clone, Copy, Debug, Default)]
pub struct SurvivalFuture3;

impl FutureEvent for SurvivalFuture3 {
    type Driving = ContactDriving;

    fn evaluate(&self, driving: &ContactDriving, n: u64, horizon: u64) -> FutureVerdict {
        survival_probe3(driving, n, horizon, false).verdict
    }
}

/// Generic-scanner adapter: the state is the `Z_-` started process, the past
/// event is `H_n` and the trace is `\overline r_{n+i} - \overline r_n`.
#[derive(Clone, Copy, Debug)]
pub struct RecordAdapter {
    pub window: usize,
    pub width_cap: usize,
}

impl ProcessAdapter for RecordAdapter {
    type Driving = ContactDriving;
    type State = LatticeConfig3;
    type Trace = i64;

    fn initial(&self) -> LatticeConfig3 {
        LatticeConfig3::z_minus(self.window / 2, self.width_cap)
    }

    fn advance(&self, driving: &ContactDriving, state: &mut LatticeConfig3, _n: u64) {
        state.step(driving);
    }

    fn past(&self, state: &LatticeConfig3, _n: u64) -> bool {
        state.at_record()
    }

    fn functional(&self, base: &LatticeConfig3, current: &LatticeConfig3) -> i64 {
        current.r().unwrap_or(i64::MIN) - base.r().unwrap_or(0)
    }
}

/// Parameters of a record scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordScanConfig {
    /// Probe horizon `T`.
    pub horizon: u64,
    /// Last candidate time `N`.
    pub max_time: u64,
    /// Initial window of the `Z_-` started process, in site offsets.
    pub window: usize,
    /// Width cap of the `Z_-` started process.
    pub width_cap: usize,
    pub collect_traces: bool,
}

impl RecordScanConfig {
    /// Horizon `T`, last time `N`, default window, traces on.
    pub fn new(horizon: u64, max_time: u64) -> Self {
        Self { horizon, max_time, window: DEFAULT_BAR_WINDOW, width_cap: DEFAULT_BAR_WINDOW, collect_traces: true }
    }
}

/// A record scan with its probe bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordScanReport {
    /// Cycles with trace `\overline r_{τ_k + i} - \overline r_{τ_k}`.
    pub scan: ScanReport<i64>,
    pub extinction_lags: Vec<u64>,
    /// Number of times `H_n` occurred.
    pub records: u64,
    /// `\overline r_n` for `n = 0..=N`.
    pub rbar: Vec<i64>,
}

/// Break times `A_n = H_n ∩ F_n` of the three-state process.
///
/// `F_n` is probed at the first record at or after the current resume
/// time; a probe at `n` that dies at `d` moves the resume time to `d`, since
/// the coupling at `n` rules out every record in `(n, d)`.
pub fn record_scan3(driving: &ContactDriving, cfg: &RecordScanConfig) -> Result<RecordScanReport, ContactError> {
    let mut builder = CycleBuilder::new(cfg.horizon, cfg.max_time, cfg.collect_traces);
    let mut bar = LatticeConfig3::z_minus(cfg.window / 2, cfg.width_cap);
    let mut rbar = Vec::with_capacity(cfg.max_time as usize + 1);
    let mut lags = Vec::new();
    let mut records = 0u64;
    let mut resume = 0u64;
    for n in 0..=cfg.max_time {
        if n > 0 {
            bar.step(driving);
        }
        let r = bar.r().ok_or(ContactError::WindowDied(n))?;
        rbar.push(r);
        if !bar.at_record() {
            continue;
        }
        records += 1;
        if n < resume {
            continue;
        }
        match survival_probe3(driving, n, cfg.horizon, false).verdict {
            FutureVerdict::Fails(lag) => {
                builder.note_probe(false);
                lags.push(lag);
                resume = n + lag;
            }
            _ => {
                builder.note_probe(true);
                if let Some(prev) = builder.last_tau() {
                    for t in prev + 1..=n {
                        builder.push_trace(rbar[t as usize] - rbar[prev as usize]);
                    }
                }
                builder.record(n, None);
                resume = n + 1;
            }
        }
    }
    Ok(RecordScanReport { scan: builder.finish(), extinction_lags: lags, records, rbar })
}

/// First step at which the coupling identity fails, if any.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingMismatch {
    pub step: u64,
    pub site: i64,
    pub hat: i8,
    pub reference: i8,
}

/// Run `X^{(n)}` and `\hat X^{(n)}` together for up to `steps` steps and
/// check that they agree on every site `x ≥ l^{(n)}` while `X^{(n)}` survives.
///
/// Returns the number of steps checked.
pub fn coupling_lemma_check(
    driving: &ContactDriving,
    hat: &LatticeConfig3,
    steps: u64,
) -> Result<u64, CouplingMismatch> {
    let mut x = LatticeConfig3::single(hat.time, usize::MAX / 4);
    let mut h = hat.clone();
    for s in 1..=steps {
        x.step(driving);
        h.step(driving);
        let (Some(l), Some(r)) = (x.l(), x.r()) else {
            return Ok(s - 1);
        };
        let hi = r.max(h.r().unwrap_or(r)) + 2;
        for site in l..=hi {
            let (a, b) = (h.state(site), x.state(site));
            if a != b {
                return Err(CouplingMismatch { step: s, site, hat: a, reference: b });
            }
        }
    }
    Ok(steps)
}

/// Check `\overline r_{n'} = \overline r_n + r^{(n)}_{n'}` at every record
/// `n ≤ last` of the endpoint path `rbar`, for `n'` up to `n + steps` while
/// `X^{(n)}` survives.
///
/// Returns the number of `(n, n')` pairs checked, or the first failing pair.
pub fn record_shift_check(driving: &ContactDriving, rbar: &[i64], last: u64, steps: u64) -> Result<usize, (u64, u64)> {
    let mut best = i64::MIN;
    let mut record_times = Vec::new();
    for (n, &r) in rbar.iter().enumerate().take(last as usize + 1) {
        if r >= best {
            record_times.push(n as u64);
            best = r;
        }
    }
    let checked: Result<Vec<usize>, (u64, u64)> = record_times
        .par_iter()
        .map(|&n| {
            let path = right_endpoint_path3(driving, n, steps);
            let mut count = 0;
            for (i, r) in path.iter().enumerate() {
                let t = n + 1 + i as u64;
                if (t as usize) >= rbar.len() {
                    break;
                }
                if rbar[t as usize] != rbar[n as usize] + r {
                    return Err((n, t));
                }
                count += 1;
            }
            Ok(count)
        })
        .collect();
    checked.map(|v| v.iter().sum())
}

/// Break times of `\hat X` itself: times `n ≤ max_time` at which `\hat r_n`
/// is a record and `F_n` occurs, probed greedily as in [`record_scan3`].
pub fn hat_break_times(driving: &ContactDriving, hat: &LatticeConfig3, horizon: u64, max_time: u64) -> Vec<u64> {
    let mut h = hat.clone();
    let mut taus = Vec::new();
    let mut resume = h.time;
    loop {
        if h.extinct {
            break;
        }
        let n = h.time;
        if h.at_record() && n >= resume {
            match survival_probe3(driving, n, horizon, false).verdict {
                FutureVerdict::Fails(lag) => resume = n + lag,
                _ => {
                    taus.push(n);
                    resume = n + 1;
                }
            }
        }
        if n >= max_time {
            break;
        }
        h.step(driving);
    }
    taus
}

/// Check the cycle decomposition of `\hat r` along the break times `taus`
/// of `\hat X` (see [`hat_break_times`]):
/// `\hat r_{τ_k + n'} = \hat r_{τ_0} + Σ_{j<k} r^{(τ_j)}_{τ_{j+1}} + r^{(τ_k)}_{τ_k + n'}`.
///
/// Pairs `(k, n')` are checked while `\hat X` and the probes involved are
/// alive. Returns the number of pairs checked, or the first failing pair.
pub fn cycle_decomposition_check(driving: &ContactDriving, hat: &LatticeConfig3, taus: &[u64]) -> Result<usize, (usize, u64)> {
    let Some(&last) = taus.last() else {
        return Ok(0);
    };
    let mut h = hat.clone();
    let mut rhat = vec![h.r()];
    while h.time < last {
        h.step(driving);
        rhat.push(h.r());
    }
    let Some(mut base) = rhat[taus[0] as usize] else {
        return Ok(0);
    };
    let mut count = 0;
    for (k, w) in taus.windows(2).enumerate() {
        let path = right_endpoint_path3(driving, w[0], w[1] - w[0]);
        if path.len() as u64 != w[1] - w[0] {
            return Ok(count);
        }
        for (i, r) in path.iter().enumerate() {
            let t = w[0] + 1 + i as u64;
            match rhat[t as usize] {
                Some(v) if v == base + r => count += 1,
                _ => return Err((k, t - w[0])),
            }
        }
        base += path[path.len() - 1];
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::two::{step2_sites, Keying, LatticeConfig2};
    use crate::regen::{scan_break_times, BreakConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture(seed: u64) -> ContactDriving {
        ContactDriving::nearest_neighbour(seed, 0.875, 0.875).unwrap()
    }

    fn random_hat(rng: &mut ChaCha8Rng, n: u64) -> LatticeConfig3 {
        let len = rng.gen_range(0..40);
        let left: Vec<i8> = (0..len)
            .map(|k| {
                let s = rng.gen_range(-1..=1i8);
                if s == 1 && (k + 1) % 2 == 1 {
                    0
                } else {
                    s
                }
            })
            .collect();
        LatticeConfig3::hat(n, &left, usize::MAX / 4).unwrap()
    }

    #[test]
    fn q_one_matches_two_state() {
        let d = ContactDriving::nearest_neighbour(8, 0.75, 1.0).unwrap();
        let mut three = LatticeConfig3::single(0, usize::MAX / 4);
        let mut two = LatticeConfig2::single(0, usize::MAX / 4);
        for n in 0..500 {
            three.step(&d);
            two.step(&d, n);
            assert_eq!(three.r(), if two.extinct { None } else { Some(two.r) });
            if two.extinct {
                break;
            }
            let sites = two.sites();
            for x in *sites.first().unwrap()..=two.r {
                assert_eq!(three.state(x) == 1, sites.contains(&x));
            }
        }
    }

    #[test]
    fn step_matches_site_reference_with_q_one() {
        let d = ContactDriving::nearest_neighbour(18, 0.7, 1.0).unwrap();
        let mut three = LatticeConfig3::single(0, usize::MAX / 4);
        let mut sites = std::collections::BTreeSet::from([0i64]);
        for n in 0..200 {
            three.step(&d);
            sites = step2_sites(&sites, &d, n, Keying::Relative);
            if sites.is_empty() {
                assert!(three.extinct);
                break;
            }
            assert_eq!(three.r(), sites.last().copied());
        }
    }

    #[test]
    fn never_infected_sites_always_take_infection() {
        let d = ContactDriving::nearest_neighbour(3, 1.0, 0.0).unwrap();
        let mut cfg = LatticeConfig3::single(0, usize::MAX / 4);
        cfg.step(&d);
        assert_eq!(cfg.states(-1, 1), vec![0, 0, 1]);
        cfg.step(&d);
        assert_eq!(cfg.states(-2, 2), vec![0, 0, 0, 0, 1]);
        let mut hat = LatticeConfig3::hat(0, &[-1, -1], usize::MAX / 4).unwrap();
        hat.step(&d);
        assert_eq!(hat.states(-1, 1), vec![1, 0, 1]);
    }

    #[test]
    fn reinfection_happens_with_probability_q() {
        let d = ContactDriving::nearest_neighbour(4, 1.0, 0.5).unwrap();
        let mut hits = 0;
        let trials = 20_000u64;
        for n in 0..trials {
            let mut cfg = LatticeConfig3::single(2 * n, usize::MAX / 4);
            cfg.step(&d);
            cfg.step(&d);
            hits += usize::from(cfg.state(0) == 1);
        }
        assert!((hits as f64 / trials as f64 - 0.5).abs() < 0.015);
    }

    #[test]
    fn parity_and_envelope_hold_over_long_runs() {
        let d = fixture(6);
        let mut cfg = LatticeConfig3::single(0, 1 << 12);
        let mut bar = LatticeConfig3::z_minus(200, 1 << 12);
        for n in 0..10_000 {
            let before = bar.r().unwrap();
            cfg.step(&d);
            bar.step(&d);
            assert!(bar.parity_ok(), "step {n}");
            assert!(bar.r().unwrap() <= before + 1);
            if !cfg.extinct {
                assert!(cfg.parity_ok() && cfg.satisfies_envelope(), "step {n}");
            }
        }
    }

    #[test]
    fn h0_always_occurs() {
        for seed in 0..20 {
            let rep = record_scan3(&fixture(seed), &RecordScanConfig::new(50, 0)).unwrap();
            assert_eq!(rep.records, 1);
        }
        assert!(LatticeConfig3::z_minus(10, 64).at_record());
    }

    #[test]
    fn coupling_lemma_on_random_left_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..200u64 {
            let d = fixture(100 + trial);
            let n = rng.gen_range(0..1_000);
            let hat = random_hat(&mut rng, n);
            coupling_lemma_check(&d, &hat, 150).unwrap();
        }
    }

    #[test]
    fn record_scan_matches_generic_scanner() {
        let d = fixture(31);
        let cfg = RecordScanConfig::new(150, 2_000);
        let fast = record_scan3(&d, &cfg).unwrap();
        let adapter = RecordAdapter { window: cfg.window, width_cap: cfg.width_cap };
        let generic = scan_break_times(&adapter, &d, &SurvivalFuture3, &BreakConfig::new(150, 2_000).with_traces(true));
        assert_eq!(fast.scan.taus, generic.taus);
        assert!(fast.scan.taus.len() > 50);
        for (a, b) in fast.scan.cycles.iter().zip(&generic.cycles) {
            assert_eq!(a.trace, b.trace);
        }
    }

    #[test]
    fn record_and_decomposition_identities_hold() {
        let d = fixture(41);
        let cfg = RecordScanConfig::new(200, 1_500);
        let rep = record_scan3(&d, &cfg).unwrap();
        assert!(record_shift_check(&d, &rep.rbar, 1_000, 300).unwrap() > 1_000);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let hat = random_hat(&mut rng, 0);
            let taus = hat_break_times(&d, &hat, 200, 1_500);
            let checked = cycle_decomposition_check(&d, &hat, &taus).unwrap();
            assert!(checked > 0 || taus.len() < 2);
        }
    }

    #[test]
    fn z_minus_window_does_not_change_endpoint() {
        let d = fixture(51);
        let mut small = LatticeConfig3::z_minus(300, 1 << 14);
        let mut large = LatticeConfig3::z_minus(1_500, 1 << 14);
        for _ in 0..1_000 {
            small.step(&d);
            large.step(&d);
            assert_eq!(small.r(), large.r());
        }
    }
}
