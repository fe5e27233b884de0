//! The continuous-space random-links model.
//!
//! Particles sit on the real line. At each step every particle is active
//! independently with probability `p`; each active particle proposes a
//! location at a random distance to its right, and the rightmost proposal
//! wins. The winner's link joins the new particle to its parent.
//!
//! The simulator keeps absolute coordinates, which never change; the
//! normalized configuration with `x_0 = 0` is obtained by subtracting the
//! rightmost coordinate.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::BinsError;
use crate::core::{exp_from_bits, geometric_from_bits, hash_key, EXP_UNIT_MAX};
use crate::regen::{resolve, BreakConfig, CycleBuilder, FutureEvent, FutureVerdict, ScanReport};

const LANE_NU: u64 = 0x4C49_4E4B_4E55;
const LANE_GAP: u64 = 0x4C49_4E4B_4750;
const LANE_LEN: u64 = 0x4C49_4E4B_4C45;

/// A normalized configuration `(x_{-k}, ..., x_0)`, nondecreasing with `x_0 = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    positions: Vec<f64>,
}

impl LinkState {
    /// A single particle at the origin.
    pub fn single() -> Self {
        Self { positions: vec![0.0] }
    }

    /// A configuration from coordinates listed left to right; `None` unless
    /// nondecreasing with last coordinate 0.
    pub fn new(positions: Vec<f64>) -> Option<Self> {
        let s = Self { positions };
        s.is_valid().then_some(s)
    }

    /// Coordinates from left to right.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Sorted with last coordinate exactly 0.
    pub fn is_valid(&self) -> bool {
        self.positions.last() == Some(&0.0) && self.positions.windows(2).all(|w| w[0] <= w[1])
    }

    /// The map `f`: lengths and activity bits are aligned with the
    /// coordinates. Returns the new configuration and the index of the
    /// winning parent, or `None` when no particle was active.
    pub fn step(&self, lengths: &[f64], active: &[bool]) -> (LinkState, Option<usize>) {
        let mut best: Option<(f64, usize)> = None;
        for i in (0..self.positions.len()).rev() {
            if active[i] {
                let cand = self.positions[i] + lengths[i];
                if best.is_none_or(|(b, _)| cand > b) {
                    best = Some((cand, i));
                }
            }
        }
        let h = best.map_or(self.positions[0], |(b, _)| b);
        let mut positions = self.positions.clone();
        if h > 0.0 {
            positions.push(h);
            for x in &mut positions {
                *x -= h;
            }
            *positions.last_mut().expect("nonempty") = 0.0;
        } else {
            let at = positions.partition_point(|&x| x <= h);
            positions.insert(at, h);
        }
        (LinkState { positions }, best.map(|(_, i)| i))
    }
}

/// Driving variables of the links model, keyed by step and rank.
///
/// Rank 0 is the rightmost particle. At step `n` the active ranks are
/// `ν_n` followed by successive independent geometric gaps, which makes the
/// activity indicators i.i.d. Bernoulli(`p`); the length proposed by rank
/// `t` is exponential with mean `mean`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkDriving {
    pub seed: u64,
    pub p: f64,
    pub mean: f64,
}

impl LinkDriving {
    /// Validated driving.
    pub fn new(seed: u64, p: f64, mean: f64) -> Result<Self, BinsError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(BinsError::Links(format!("activity probability {p} must lie in (0, 1]")));
        }
        if !(mean.is_finite() && mean > 0.0) {
            return Err(BinsError::Links(format!("mean length {mean} must be positive")));
        }
        Ok(Self { seed, p, mean })
    }

    /// `q = 1 - p`.
    pub fn q(&self) -> f64 {
        1.0 - self.p
    }

    /// `ν_n`: the rank of the rightmost active particle at step `n`.
    #[inline]
    pub fn nu(&self, n: u64) -> u64 {
        geometric_from_bits(hash_key(self.seed, LANE_NU, n as i64, 0), self.q()) - 1
    }

    /// The next active rank after `t` at step `n`.
    #[inline]
    pub fn next_active(&self, n: u64, t: u64) -> u64 {
        t + geometric_from_bits(hash_key(self.seed, LANE_GAP, n as i64, t), self.q())
    }

    /// The length proposed by rank `t` at step `n`.
    #[inline]
    pub fn length(&self, n: u64, t: u64) -> f64 {
        exp_from_bits(hash_key(self.seed, LANE_LEN, n as i64, t), 1.0 / self.mean)
    }

    /// A bound on every length.
    pub fn max_length(&self) -> f64 {
        EXP_UNIT_MAX * self.mean
    }

    /// Lengths and activity bits of ranks `0..count`, listed from rank 0.
    pub fn marks(&self, n: u64, count: usize) -> (Vec<f64>, Vec<bool>) {
        let lengths = (0..count as u64).map(|t| self.length(n, t)).collect();
        let mut active = vec![false; count];
        let mut t = self.nu(n);
        while (t as usize) < count {
            active[t as usize] = true;
            t = self.next_active(n, t);
        }
        (lengths, active)
    }
}

/// Particle system in absolute coordinates with creation-order ids.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkSim {
    /// Absolute coordinates, nondecreasing.
    pos: Vec<f64>,
    /// Ids aligned with `pos`.
    ids: Vec<u64>,
    /// Absolute coordinate of each particle by id.
    by_id: Vec<f64>,
    /// Parent id of each particle; `None` for the first and for unlinked placements.
    parent: Vec<Option<u64>>,
}

impl LinkSim {
    /// Particle 0 alone at the origin.
    pub fn new() -> Self {
        Self { pos: vec![0.0], ids: vec![0], by_id: vec![0.0], parent: vec![None] }
    }

    /// Number of particles.
    pub fn len(&self) -> usize {
        self.pos.len()
    }

    /// Always false: the system starts with one particle.
    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    /// The normalized configuration.
    pub fn state(&self) -> LinkState {
        let top = *self.pos.last().expect("nonempty");
        LinkState { positions: self.pos.iter().map(|&x| x - top).collect() }
    }

    /// `(x_{-j}, ..., x_0)` relative to the rightmost particle, padded with `-∞`.
    pub fn tail(&self, j: usize) -> Vec<f64> {
        let top = *self.pos.last().expect("nonempty");
        let len = self.pos.len();
        (0..=j).rev().map(|r| if r < len { self.pos[len - 1 - r] - top } else { f64::NEG_INFINITY }).collect()
    }

    /// Absolute coordinate of particle `id`.
    pub fn position_of(&self, id: u64) -> f64 {
        self.by_id[id as usize]
    }

    /// Parent of particle `id`.
    pub fn parent_of(&self, id: u64) -> Option<u64> {
        self.parent[id as usize]
    }

    /// Id of the rightmost particle.
    pub fn top_id(&self) -> u64 {
        *self.ids.last().expect("nonempty")
    }

    /// True when the rightmost particle is strictly to the right of all others.
    pub fn unique_top(&self) -> bool {
        let len = self.pos.len();
        len == 1 || self.pos[len - 2] < self.pos[len - 1]
    }

    /// Coordinate of rank `t` relative to the rightmost particle.
    pub fn relative(&self, t: usize) -> f64 {
        let len = self.pos.len();
        self.pos[len - 1 - t] - self.pos[len - 1]
    }

    /// Create particle `n` using the marks of step `n`; returns its parent.
    pub fn step(&mut self, d: &LinkDriving, n: u64) -> Option<u64> {
        let len = self.pos.len();
        let lmax = d.max_length();
        let mut best: Option<(f64, usize)> = None;
        let mut t = d.nu(n);
        while (t as usize) < len {
            let idx = len - 1 - t as usize;
            let x = self.pos[idx];
            if best.is_some_and(|(b, _)| x + lmax <= b) {
                break;
            }
            let cand = x + d.length(n, t);
            if best.is_none_or(|(b, _)| cand > b) {
                best = Some((cand, idx));
            }
            t = d.next_active(n, t);
        }
        let (h, parent) = match best {
            Some((h, idx)) => (h, Some(self.ids[idx])),
            None => (self.pos[0], None),
        };
        let at = self.pos.partition_point(|&x| x <= h);
        self.pos.insert(at, h);
        self.ids.insert(at, n);
        debug_assert_eq!(self.by_id.len() as u64, n);
        self.by_id.push(h);
        self.parent.push(parent);
        parent
    }
}

impl Default for LinkSim {
    fn default() -> Self {
        Self::new()
    }
}

/// `∏_{j=1}^{h} (1 - q^j)`.
pub fn renewal_product(q: f64, h: u64) -> f64 {
    (1..=h).map(|j| 1.0 - q.powi(j as i32)).product()
}

/// `F^(1)_n = ⋂_{j ≥ 1} {ν_{n+j} ≤ j - 1}` up to `horizon`.
pub fn first_future(d: &LinkDriving, n: u64, horizon: u64) -> FutureVerdict {
    for j in 1..=horizon {
        if d.nu(n + j) > j - 1 {
            return FutureVerdict::Fails(j);
        }
    }
    if d.q() == 0.0 {
        FutureVerdict::Occurs
    } else {
        FutureVerdict::Undecided(horizon)
    }
}

/// Fraction of occurrences of `F^(1)` over `probes` disjoint windows, with
/// undecided probes counted as occurring.
pub fn first_future_fraction(d: &LinkDriving, probes: u64, horizon: u64) -> f64 {
    let hits = (0..probes).filter(|i| !matches!(first_future(d, i * (horizon + 1), horizon), FutureVerdict::Fails(_)));
    hits.count() as f64 / probes.max(1) as f64
}

/// Mean cycle `b` and mean backward recurrence time `b0` of the occurrence
/// times of `F^(1)`, from `steps` consecutive indices.
pub fn calibrate_renewal(d: &LinkDriving, steps: u64, horizon: u64) -> Option<(f64, f64)> {
    let occurs: Vec<bool> =
        (0..steps).map(|n| !matches!(first_future(d, n, horizon), FutureVerdict::Fails(_))).collect();
    let times: Vec<u64> = (0..steps).filter(|&n| occurs[n as usize]).collect();
    if times.len() < 2 {
        return None;
    }
    let b = (times[times.len() - 1] - times[0]) as f64 / (times.len() - 1) as f64;
    let mut last = times[0];
    let mut sum = 0.0;
    for n in times[0]..steps {
        if occurs[n as usize] {
            last = n;
        }
        sum += (n - last) as f64;
    }
    let b0 = sum / (steps - times[0]) as f64;
    Some((b, b0))
}

/// Parameters of a links scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub eps: f64,
    /// Number `K` of backward blocks checked by the past event.
    pub blocks: usize,
    /// Mean cycle of the `F^(1)` renewal sequence.
    pub b: f64,
    /// Mean backward recurrence time of that sequence.
    pub b0: f64,
    /// Depth `j` of the trace `(x_{-j}, ..., x_0)`.
    pub depth: usize,
}

impl LinkParams {
    /// Parameters with `b` and `b0` from a calibration run on an independent seed.
    pub fn calibrated(d: &LinkDriving, eps: f64, blocks: usize, steps: u64, horizon: u64) -> Result<Self, BinsError> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(BinsError::Links(format!("ε = {eps} must lie in (0, 1)")));
        }
        let cal = LinkDriving { seed: d.seed ^ 0xCA11_B8A7_E000_0001, ..d.clone() };
        let (b, b0) = calibrate_renewal(&cal, steps, horizon)
            .ok_or_else(|| BinsError::Links("calibration found fewer than two renewals".into()))?;
        Ok(Self { eps, blocks, b, b0, depth: 1 })
    }

    /// `c_{-j}`: zero up to `(1+ε)(b0 + b)`, then `r a (1-ε)` on
    /// `((1+ε)(b0 + r b), (1+ε)(b0 + (r+1) b)]`.
    pub fn c(&self, j: u64, mean: f64) -> f64 {
        let scaled = (j as f64 / (1.0 + self.eps) - self.b0) / self.b;
        let r = (scaled.ceil() - 1.0).max(0.0);
        r * mean * (1.0 - self.eps)
    }
}

/// `c'_j = min(c_{-j}, L)` for ranks `0..` until the cap `L` is reached.
fn capped_constants(params: &LinkParams, mean: f64, lmax: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for j in 0u64.. {
        let c = params.c(j, mean).min(lmax);
        out.push(c);
        if c >= lmax {
            break;
        }
    }
    out
}

/// The future event `F_n = F^(1)_n ∩ F^(2)_n`.
///
/// `F^(2)_n` evolves the particles created after `n` on their own, with
/// particle `n` at 0, and requires at every step `n + i` that the best
/// active proposal among them beats `l - c'_j` for every active rank `j`
/// of the particles present at time `n` (shifted down by the `i - 1` new
/// particles above them).
#[derive(Clone, Debug)]
pub struct LinkFuture {
    constants: Vec<f64>,
    lmax: f64,
}

impl LinkFuture {
    /// Build from parameters and driving.
    pub fn new(params: &LinkParams, d: &LinkDriving) -> Self {
        let lmax = d.max_length();
        Self { constants: capped_constants(params, d.mean, lmax), lmax }
    }

    fn c(&self, j: u64) -> f64 {
        self.constants.get(j as usize).copied().unwrap_or(self.lmax)
    }

    /// `F^(2)_n` alone, assuming `F^(1)_n` holds up to `horizon`.
    pub fn second(&self, d: &LinkDriving, n: u64, horizon: u64) -> FutureVerdict {
        let mut ys: Vec<f64> = vec![0.0];
        for i in 1..=horizon {
            let s = n + i;
            let fresh = ys.len() as u64;
            let mut best = f64::NEG_INFINITY;
            let mut t = d.nu(s);
            while t < fresh {
                let cand = ys[(fresh - 1 - t) as usize] + d.length(s, t);
                if cand > best {
                    best = cand;
                }
                t = d.next_active(s, t);
            }
            if best == f64::NEG_INFINITY {
                return FutureVerdict::Fails(i);
            }
            loop {
                let j = t - fresh + 1;
                let c = self.c(j);
                if self.lmax - c <= best {
                    break;
                }
                if d.length(s, t) - c >= best {
                    return FutureVerdict::Fails(i);
                }
                t = d.next_active(s, t);
            }
            let at = ys.partition_point(|&y| y <= best);
            ys.insert(at, best);
        }
        FutureVerdict::Undecided(horizon)
    }
}

impl FutureEvent for LinkFuture {
    type Driving = LinkDriving;

    fn evaluate(&self, d: &LinkDriving, n: u64, horizon: u64) -> FutureVerdict {
        let first = first_future(d, n, horizon);
        if let FutureVerdict::Fails(_) = first {
            return first;
        }
        match self.second(d, n, horizon) {
            FutureVerdict::Fails(i) => FutureVerdict::Fails(i),
            _ => first,
        }
    }
}

/// A links scan with the replay check of the attachment property.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkScanReport {
    pub params: LinkParams,
    pub scan: ScanReport<Vec<f64>>,
    /// Times at which the past event held.
    pub past_hits: u64,
    /// Steps checked by the replay.
    pub attachments_checked: u64,
    /// `(τ, s)` pairs where particle `s`, created within the horizon after
    /// break time `τ`, attached to a particle numbered below `τ`.
    pub attachment_violations: Vec<(u64, u64)>,
}

/// The past event at time `n`: particle `n` is the unique rightmost
/// particle, the last `K` renewal blocks (as known at time `n`) are short
/// and long enough, and rank `j` lies at least `c'_j` below the top.
fn past_event(
    sim: &LinkSim,
    reds: &[u64],
    n: u64,
    params: &LinkParams,
    mean: f64,
    constants: &[f64],
    lmax: f64,
) -> bool {
    if sim.top_id() != n || !sim.unique_top() {
        return false;
    }
    let top = sim.position_of(n);
    for i in 1..=params.blocks {
        if reds.len() <= i {
            break;
        }
        let m = reds[reds.len() - 1 - i];
        if (n - m) as f64 > (1.0 + params.eps) * (params.b0 + i as f64 * params.b) {
            return false;
        }
        if top - sim.position_of(m) < i as f64 * mean * (1.0 - params.eps) {
            return false;
        }
    }
    for j in 1..sim.len() {
        let x = sim.relative(j);
        if x <= -lmax {
            break;
        }
        let c = constants.get(j).copied().unwrap_or(lmax);
        if x > -c {
            return false;
        }
    }
    true
}

/// Scan `A_n = H_n ∩ F^(1)_n ∩ F^(2)_n` from a single particle, with trace
/// `(x_{-j}, ..., x_0)` and replay of the attachment property after every
/// break time.
pub fn scan_links(d: &LinkDriving, params: &LinkParams, cfg: &BreakConfig) -> Result<LinkScanReport, BinsError> {
    if !(params.eps > 0.0 && params.eps < 1.0) {
        return Err(BinsError::Links(format!("ε = {} must lie in (0, 1)", params.eps)));
    }
    let lmax = d.max_length();
    let constants = capped_constants(params, d.mean, lmax);
    let future = LinkFuture::new(params, d);
    let mut builder = CycleBuilder::new(cfg.horizon, cfg.max_time, cfg.collect_traces);
    let mut sim = LinkSim::new();
    let mut reds: Vec<u64> = vec![0];
    let mut pending: VecDeque<u64> = VecDeque::new();
    let mut past_hits = 0;
    let mut checked = 0;
    let mut violations = Vec::new();
    for n in 0..=cfg.max_time {
        if n > 0 {
            let parent = sim.step(d, n);
            while pending.front().is_some_and(|&tau| tau + cfg.horizon < n) {
                pending.pop_front();
            }
            for &tau in &pending {
                checked += 1;
                if parent.is_none_or(|p| p < tau) {
                    violations.push((tau, n));
                }
            }
            let nu = d.nu(n);
            while reds.last().is_some_and(|&m| m + nu >= n) {
                reds.pop();
            }
            reds.push(n);
            if builder.collecting() {
                builder.push_trace(sim.tail(params.depth));
            }
        }
        if builder.last_tau().is_some_and(|last| n < last + cfg.min_separation) {
            continue;
        }
        if !past_event(&sim, &reds, n, params, d.mean, &constants, lmax) {
            continue;
        }
        past_hits += 1;
        let res = resolve(&future, d, n, cfg);
        builder.note_probe(res.undecided);
        builder.note_horizon(res.horizon_used);
        if res.occurs {
            builder.record(n, None);
            pending.push_back(n);
        }
    }
    Ok(LinkScanReport {
        params: params.clone(),
        scan: builder.finish(),
        past_hits,
        attachments_checked: checked,
        attachment_violations: violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn map_examples() {
        let (x, w) = LinkState::single().step(&[0.7], &[true]);
        assert!(close(x.positions(), &[-0.7, 0.0]));
        assert_eq!(w, Some(0));
        let two = LinkState::new(vec![-1.0, 0.0]).unwrap();
        let (y, w) = two.step(&[0.5, 0.5], &[false, false]);
        assert!(close(y.positions(), &[-1.0, -1.0, 0.0]));
        assert_eq!(w, None);
        let (z, w) = two.step(&[0.5, 0.2], &[true, true]);
        assert!(close(z.positions(), &[-1.2, -0.2, 0.0]));
        assert_eq!(w, Some(1));
        let (u, _) = two.step(&[0.5, 0.2], &[true, false]);
        assert!(close(u.positions(), &[-1.0, -0.5, 0.0]));
    }

    #[test]
    fn simulator_agrees_with_the_map() {
        let d = LinkDriving::new(3, 0.5, 1.0).unwrap();
        let mut sim = LinkSim::new();
        let mut x = LinkState::single();
        for n in 1..=400u64 {
            let len = x.positions().len();
            let (lens, act) = d.marks(n, len);
            let lengths: Vec<f64> = lens.iter().rev().copied().collect();
            let active: Vec<bool> = act.iter().rev().copied().collect();
            let (y, _) = x.step(&lengths, &active);
            sim.step(&d, n);
            let s = sim.state();
            assert!(y.is_valid() && s.is_valid());
            assert_eq!(y.positions().len(), len + 1);
            assert!(y.positions().iter().zip(s.positions()).all(|(a, b)| (a - b).abs() < 1e-9), "step {n}");
            x = y;
        }
    }

    #[test]
    fn renormalization_only_lowers() {
        let d = LinkDriving::new(9, 0.3, 1.0).unwrap();
        let mut sim = LinkSim::new();
        for n in 1..=500u64 {
            let top_before = sim.position_of(sim.top_id());
            let before: Vec<f64> = (0..n).map(|id| sim.position_of(id) - top_before).collect();
            sim.step(&d, n);
            let top_after = sim.position_of(sim.top_id());
            assert!(sim.state().is_valid());
            for (id, &rel) in before.iter().enumerate() {
                assert!(sim.position_of(id as u64) - top_after <= rel);
            }
        }
    }

    #[test]
    fn full_activity_always_renews() {
        let d = LinkDriving::new(1, 1.0, 1.0).unwrap();
        for n in 0..100 {
            assert_eq!(d.nu(n), 0);
            assert_eq!(first_future(&d, n, 32), FutureVerdict::Occurs);
        }
    }

    #[test]
    fn first_future_frequency() {
        let d = LinkDriving::new(77, 0.5, 1.0).unwrap();
        let f = first_future_fraction(&d, 40_000, 64);
        assert!((f - renewal_product(0.5, 64)).abs() < 0.01, "{f}");
        let (b, b0) = calibrate_renewal(&d, 200_000, 64).unwrap();
        assert!((b - 1.0 / renewal_product(0.5, 64)).abs() < 0.1, "{b}");
        assert!(b0 > 0.0 && b0 < 2.0 * b, "{b} {b0}");
    }

    #[test]
    fn constants_are_stepped() {
        let p = LinkParams { eps: 0.5, blocks: 8, b: 2.0, b0: 1.0, depth: 1 };
        assert_eq!(p.c(0, 1.0), 0.0);
        assert_eq!(p.c(4, 1.0), 0.0);
        assert_eq!(p.c(5, 1.0), 0.5);
        assert_eq!(p.c(7, 1.0), 0.5);
        assert_eq!(p.c(8, 1.0), 1.0);
        let c = capped_constants(&p, 1.0, 3.0);
        assert_eq!(*c.last().unwrap(), 3.0);
        assert!(c.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn attachment_is_exact_on_replay() {
        let d = LinkDriving::new(5, 0.5, 1.0).unwrap();
        let params = LinkParams::calibrated(&d, 0.5, 16, 100_000, 64).unwrap();
        let cfg = BreakConfig::new(64, 60_000).with_traces(false);
        let rep = scan_links(&d, &params, &cfg).unwrap();
        assert!(rep.scan.taus.len() > 20, "{} breaks, {} past hits", rep.scan.taus.len(), rep.past_hits);
        assert!(rep.attachments_checked > 0);
        assert!(rep.attachment_violations.is_empty(), "{:?}", &rep.attachment_violations[..5.min(rep.attachment_violations.len())]);
    }

    #[test]
    fn red_stack_matches_direct_definition() {
        let d = LinkDriving::new(6, 0.5, 1.0).unwrap();
        let mut reds: Vec<u64> = vec![0];
        for n in 1..=300u64 {
            let nu = d.nu(n);
            while reds.last().is_some_and(|&m| m + nu >= n) {
                reds.pop();
            }
            reds.push(n);
            let direct: Vec<u64> =
                (0..=n).filter(|&m| (m + 1..=n).all(|s| d.nu(s) < s - m)).collect();
            assert_eq!(reds, direct, "time {n}");
        }
    }
}
