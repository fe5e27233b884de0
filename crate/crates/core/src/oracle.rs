//! Exact verification by enumeration over a finite alphabet.
//!
//! Every sequence `ξ_1..ξ_{T+L}` is enumerated with its exact rational
//! probability. Break times are computed on each sequence, and laws of
//! break times and segments are accumulated as integer numerators over the
//! common denominator `d^{T+L}`. Monotonicity conditions are checked by
//! projecting an indicator onto a window of coordinates and testing that the
//! projection is well defined.

use std::collections::BTreeMap;
use std::sync::Arc;

use num::{BigInt, BigRational, BigUint, Integer, One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Alphabet, DrivingStream, Law};
use crate::regen::{BreakConfig, FutureEvent, FutureVerdict, ProcessAdapter};

/// Default cap on the number of enumerated sequences.
pub const ENUMERATION_GUARD: u128 = 100_000_000;

/// Errors raised by exact enumeration.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("enumeration of {count} sequences exceeds the guard {guard}")]
    Size { count: u128, guard: u128 },
    #[error("alphabet has no exact rational weights")]
    NotExact,
    #[error("event `{event}` at n={n} reads ξ_{index}, outside its declared window")]
    Measurability { event: String, n: usize, index: usize },
    #[error("projection for m={m} is not well defined")]
    Projection { m: usize },
    #[error("no positive-probability reference history")]
    NoReference,
    #[error("unknown event preset `{0}`")]
    UnknownPreset(String),
}

/// Indicator of an event on a full sequence; `seq[i]` is `ξ_{i+1}` and the
/// second argument is the base index `n`.
pub type EventFn = Arc<dyn Fn(&[i64], usize) -> bool + Send + Sync>;

/// Which side of the base index an event is allowed to read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventSide {
    /// Reads `ξ_{n+1}..ξ_{n+L}`.
    Future { lookahead: usize },
    /// Reads `ξ_{n-P+1}..ξ_n`, or all of `ξ_1..ξ_n` when `window` is `None`.
    Past { window: Option<usize> },
}

/// A finite-horizon event with a declared window of dependence.
#[derive(Clone)]
pub struct TruncatedEvent {
    pub name: String,
    pub side: EventSide,
    eval: EventFn,
}

impl std::fmt::Debug for TruncatedEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TruncatedEvent").field("name", &self.name).field("side", &self.side).finish()
    }
}

impl TruncatedEvent {
    /// A future event reading `lookahead` symbols after the base index.
    pub fn future(name: &str, lookahead: usize, f: impl Fn(&[i64], usize) -> bool + Send + Sync + 'static) -> Self {
        Self { name: name.to_string(), side: EventSide::Future { lookahead }, eval: Arc::new(f) }
    }

    /// A past event reading the history up to the base index.
    pub fn past(name: &str, window: Option<usize>, f: impl Fn(&[i64], usize) -> bool + Send + Sync + 'static) -> Self {
        Self { name: name.to_string(), side: EventSide::Past { window }, eval: Arc::new(f) }
    }

    /// The sure past event `Ω`.
    pub fn always_past() -> Self {
        Self::past("always", Some(0), |_, _| true)
    }

    /// Evaluate at base index `n` on a sequence long enough for the window.
    #[inline]
    pub fn eval(&self, seq: &[i64], n: usize) -> bool {
        (self.eval)(seq, n)
    }

    /// Number of symbols after `n` the event may read.
    pub fn lookahead(&self) -> usize {
        match self.side {
            EventSide::Future { lookahead } => lookahead,
            EventSide::Past { .. } => 0,
        }
    }

    /// True for the sure past event.
    pub fn is_trivial_past(&self) -> bool {
        matches!(self.side, EventSide::Past { window: Some(0) })
    }

    fn allowed(&self, n: usize, index: usize) -> bool {
        match self.side {
            EventSide::Future { lookahead } => index > n && index <= n + lookahead,
            EventSide::Past { window: None } => index >= 1 && index <= n,
            EventSide::Past { window: Some(p) } => index + p > n && index <= n,
        }
    }
}

/// Check by exhaustive perturbation that `event` reads nothing outside its
/// declared window, at every base index in `bases`.
pub fn check_window(event: &TruncatedEvent, symbols: &[i64], bases: &[usize], extra: usize) -> Result<(), OracleError> {
    for &n in bases {
        let len = n + event.lookahead() + extra;
        let count = (symbols.len() as u128).pow(len as u32) * (len as u128) * symbols.len() as u128;
        if count > ENUMERATION_GUARD {
            return Err(OracleError::Size { count, guard: ENUMERATION_GUARD });
        }
        let d = symbols.len();
        let total = d.pow(len as u32);
        let violation = (0..total).into_par_iter().find_map_any(|code| {
            let mut seq = decode(code, d, len, symbols);
            let base = event.eval(&seq, n);
            for idx in 1..=len {
                if event.allowed(n, idx) {
                    continue;
                }
                let keep = seq[idx - 1];
                for &alt in symbols {
                    if alt == keep {
                        continue;
                    }
                    seq[idx - 1] = alt;
                    let changed = event.eval(&seq, n) != base;
                    seq[idx - 1] = keep;
                    if changed {
                        return Some(idx);
                    }
                }
            }
            None
        });
        if let Some(index) = violation {
            return Err(OracleError::Measurability { event: event.name.clone(), n, index });
        }
    }
    Ok(())
}

fn decode(mut code: usize, d: usize, len: usize, symbols: &[i64]) -> Vec<i64> {
    let mut seq = vec![0; len];
    for slot in seq.iter_mut().rev() {
        *slot = symbols[code % d];
        code /= d;
    }
    seq
}

fn encode(window: &[i64], symbols: &[i64]) -> usize {
    window.iter().fold(0, |acc, s| acc * symbols.len() + symbols.iter().position(|x| x == s).unwrap_or(0))
}

/// Integer weights `w_i · d` over a common denominator `d`.
#[derive(Clone, Debug)]
struct IntegerWeights {
    symbols: Vec<i64>,
    numerators: Vec<u64>,
    denominator: u64,
}

impl IntegerWeights {
    fn new(alphabet: &Alphabet) -> Result<Self, OracleError> {
        let exact = alphabet.exact_weights().ok_or(OracleError::NotExact)?;
        let den = exact.iter().fold(BigInt::one(), |acc, w| acc.lcm(w.denom()));
        let denominator = den.to_u64().ok_or(OracleError::NotExact)?;
        let numerators = exact
            .iter()
            .map(|w| (w.numer() * (&den / w.denom())).to_u64().ok_or(OracleError::NotExact))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { symbols: alphabet.symbols().to_vec(), numerators, denominator })
    }

    fn weight(&self, seq: &[i64]) -> BigUint {
        let mut acc: u128 = 1;
        let mut big: Option<BigUint> = None;
        for s in seq {
            let i = self.symbols.iter().position(|x| x == s).unwrap_or(0);
            let w = self.numerators[i];
            if w == 0 {
                return BigUint::zero();
            }
            match &mut big {
                Some(b) => *b *= w,
                None => match acc.checked_mul(w as u128) {
                    Some(v) => acc = v,
                    None => big = Some(BigUint::from(acc) * w),
                },
            }
        }
        big.unwrap_or_else(|| BigUint::from(acc))
    }

    fn denominator(&self, len: usize) -> BigUint {
        BigUint::from(self.denominator).pow(len as u32)
    }
}

/// Format `num / den` in lowest terms.
pub fn ratio_string(num: &BigUint, den: &BigUint) -> String {
    let r = BigRational::new(BigInt::from(num.clone()), BigInt::from(den.clone()));
    format!("{}/{}", r.numer(), r.denom())
}

fn ratio(num: &BigUint, den: &BigUint) -> BigRational {
    BigRational::new(BigInt::from(num.clone()), BigInt::from(den.clone()))
}

fn rational_string(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Break times in `0..=t_max` on one sequence, greedy from the left.
pub fn break_times(seq: &[i64], t_max: usize, past: &TruncatedEvent, future: &TruncatedEvent, min_sep: usize) -> Vec<usize> {
    let mut taus = Vec::new();
    let mut next = 0usize;
    for n in 0..=t_max {
        if n < next {
            continue;
        }
        if past.eval(seq, n) && future.eval(seq, n) {
            taus.push(n);
            next = n + min_sep.max(1);
        }
    }
    taus
}

/// The first `k + 1` break times and the symbols `ξ_1..ξ_{τ_k}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct History {
    pub taus: Vec<usize>,
    pub prefix: Vec<i64>,
}

impl History {
    /// `τ_k`.
    pub fn last(&self) -> usize {
        *self.taus.last().unwrap_or(&0)
    }
}

/// One outcome of `(τ_0, τ_1, ξ_{τ_0+1}..ξ_{τ_1})`; missing times are `None`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Outcome {
    pub tau0: Option<usize>,
    pub tau1: Option<usize>,
    pub segment: Vec<i64>,
}

/// Exact laws accumulated from a full enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactLaw {
    pub symbols: Vec<i64>,
    pub t_max: usize,
    pub lookahead: usize,
    pub min_separation: usize,
    /// Common denominator of every numerator below.
    pub denominator: BigUint,
    /// Joint law of `(τ_0, τ_1, segment)`.
    pub joint: BTreeMap<Outcome, BigUint>,
    /// Mass of each history event.
    pub histories: BTreeMap<History, BigUint>,
    /// Mass of each history event jointly with the next segment.
    pub continuations: BTreeMap<History, BTreeMap<Vec<i64>, BigUint>>,
    /// Mass of `{τ_1 - τ_0 = g, ξ_{τ_1+1} = s}`.
    pub next_symbol: BTreeMap<(usize, i64), BigUint>,
}

#[derive(Default)]
struct Accumulator {
    joint: BTreeMap<Outcome, BigUint>,
    histories: BTreeMap<History, BigUint>,
    continuations: BTreeMap<History, BTreeMap<Vec<i64>, BigUint>>,
    next_symbol: BTreeMap<(usize, i64), BigUint>,
}

fn add_to<K: Ord>(map: &mut BTreeMap<K, BigUint>, key: K, w: &BigUint) {
    *map.entry(key).or_insert_with(BigUint::zero) += w;
}

impl Accumulator {
    fn merge(mut self, other: Accumulator) -> Accumulator {
        for (k, v) in other.joint {
            add_to(&mut self.joint, k, &v);
        }
        for (k, v) in other.histories {
            add_to(&mut self.histories, k, &v);
        }
        for (h, segs) in other.continuations {
            let entry = self.continuations.entry(h).or_default();
            for (s, v) in segs {
                add_to(entry, s, &v);
            }
        }
        for (k, v) in other.next_symbol {
            add_to(&mut self.next_symbol, k, &v);
        }
        self
    }
}

/// Enumerate all sequences `ξ_1..ξ_{T+L}` and accumulate exact laws of break
/// times and segments, for break times in `0..=T`.
pub fn enumerate_exact(
    alphabet: &Alphabet,
    t_max: usize,
    past: &TruncatedEvent,
    future: &TruncatedEvent,
    min_sep: usize,
) -> Result<ExactLaw, OracleError> {
    let weights = IntegerWeights::new(alphabet)?;
    let lookahead = future.lookahead();
    let len = t_max + lookahead;
    let d = weights.symbols.len();
    let count = (d as u128).pow(len as u32);
    if count > ENUMERATION_GUARD {
        return Err(OracleError::Size { count, guard: ENUMERATION_GUARD });
    }
    let prefix_len = len.min(4);
    let chunk = d.pow((len - prefix_len) as u32);
    let acc = (0..d.pow(prefix_len as u32))
        .into_par_iter()
        .fold(Accumulator::default, |mut acc, p| {
            for c in 0..chunk {
                let seq = decode(p * chunk + c, d, len, &weights.symbols);
                let w = weights.weight(&seq);
                if w.is_zero() {
                    continue;
                }
                let taus = break_times(&seq, t_max, past, future, min_sep);
                let outcome = Outcome {
                    tau0: taus.first().copied(),
                    tau1: taus.get(1).copied(),
                    segment: if taus.len() >= 2 { seq[taus[0]..taus[1]].to_vec() } else { Vec::new() },
                };
                add_to(&mut acc.joint, outcome, &w);
                for k in 0..taus.len() {
                    let h = History { taus: taus[..=k].to_vec(), prefix: seq[..taus[k]].to_vec() };
                    if k + 1 < taus.len() {
                        let seg = seq[taus[k]..taus[k + 1]].to_vec();
                        add_to(acc.continuations.entry(h.clone()).or_default(), seg, &w);
                    }
                    add_to(&mut acc.histories, h, &w);
                }
                if taus.len() >= 2 && taus[1] < len {
                    add_to(&mut acc.next_symbol, (taus[1] - taus[0], seq[taus[1]]), &w);
                }
            }
            acc
        })
        .reduce(Accumulator::default, Accumulator::merge);
    Ok(ExactLaw {
        symbols: weights.symbols.clone(),
        t_max,
        lookahead,
        min_separation: min_sep.max(1),
        denominator: weights.denominator(len),
        joint: acc.joint,
        histories: acc.histories,
        continuations: acc.continuations,
        next_symbol: acc.next_symbol,
    })
}

impl ExactLaw {
    /// Sum of all joint masses as a rational; exactly 1 for a valid law.
    pub fn total_mass(&self) -> BigRational {
        let total = self.joint.values().fold(BigUint::zero(), |a, b| a + b);
        ratio(&total, &self.denominator)
    }

    /// The joint law with masses as `"num/den"` strings.
    pub fn joint_strings(&self) -> Vec<(Outcome, String)> {
        self.joint.iter().map(|(o, m)| (o.clone(), ratio_string(m, &self.denominator))).collect()
    }

    /// The history with the earliest `τ_k` and positive mass, preferring `τ_0`.
    pub fn reference_history(&self) -> Option<&History> {
        self.histories
            .iter()
            .filter(|(_, m)| !m.is_zero())
            .min_by_key(|(h, _)| (h.last(), h.taus.len(), h.prefix.clone()))
            .map(|(h, _)| h)
    }

    /// `Pr(τ_1 - τ_0 = g | reference history)` for `g` up to `T - τ_ref`.
    pub fn gap_pmf(&self) -> Result<Vec<BigRational>, OracleError> {
        let reference = self.reference_history().ok_or(OracleError::NoReference)?;
        let mass = &self.histories[reference];
        let room = self.t_max - reference.last();
        let mut pmf = vec![BigRational::zero(); room];
        if let Some(segs) = self.continuations.get(reference) {
            for (s, m) in segs {
                if s.len() <= room {
                    pmf[s.len() - 1] += ratio(m, mass);
                }
            }
        }
        Ok(pmf)
    }

    /// `Pr(ξ_{τ_1+1} = symbol | τ_1 - τ_0 = gap)`, or `None` if the gap has no mass.
    pub fn next_symbol_given_gap(&self, gap: usize, symbol: i64) -> Option<BigRational> {
        let total = self
            .next_symbol
            .iter()
            .filter(|((g, _), _)| *g == gap)
            .fold(BigUint::zero(), |a, (_, m)| a + m);
        if total.is_zero() {
            return None;
        }
        let hit = self.next_symbol.get(&(gap, symbol)).cloned().unwrap_or_default();
        Some(ratio(&hit, &total))
    }
}

/// Evidence that a segment law depends on the history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidWitness {
    pub history: History,
    pub reference: History,
    pub segment: Vec<i64>,
    pub given_history: String,
    pub given_reference: String,
}

/// Verdict of the exact i.i.d. verification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidVerdict {
    pub pass: bool,
    pub histories_checked: usize,
    pub comparisons: usize,
    pub witness: Option<IidWitness>,
}

/// Check that, for every positive-probability history `h` with `τ_k = t`,
/// the conditional law of the next segment equals that given the reference
/// history, on every segment `s` with `t + |s| ≤ T` (where both events are
/// decided by the enumerated coordinates). Equality is tested as
/// `P(h,s) P(ref) = P(ref,s) P(h)` in exact integers.
pub fn verify_iid_segments_exact(law: &ExactLaw) -> Result<IidVerdict, OracleError> {
    let reference = law.reference_history().ok_or(OracleError::NoReference)?.clone();
    let ref_mass = law.histories[&reference].clone();
    let empty = BTreeMap::new();
    let ref_segs = law.continuations.get(&reference).unwrap_or(&empty);
    let mut comparisons = 0;
    let mut checked = 0;
    for (h, h_mass) in &law.histories {
        if h_mass.is_zero() || *h == reference {
            continue;
        }
        checked += 1;
        let room = law.t_max - h.last().max(reference.last());
        let h_segs = law.continuations.get(h).unwrap_or(&empty);
        let mut keys: Vec<&Vec<i64>> = ref_segs.keys().chain(h_segs.keys()).filter(|s| s.len() <= room).collect();
        keys.sort();
        keys.dedup();
        let zero = BigUint::zero();
        for s in keys {
            comparisons += 1;
            let a = h_segs.get(s).unwrap_or(&zero);
            let b = ref_segs.get(s).unwrap_or(&zero);
            if a * &ref_mass != b * h_mass {
                return Ok(IidVerdict {
                    pass: false,
                    histories_checked: checked,
                    comparisons,
                    witness: Some(IidWitness {
                        history: h.clone(),
                        reference: reference.clone(),
                        segment: s.clone(),
                        given_history: ratio_string(a, h_mass),
                        given_reference: ratio_string(b, &ref_mass),
                    }),
                });
            }
        }
    }
    Ok(IidVerdict { pass: true, histories_checked: checked, comparisons, witness: None })
}

/// A window-indexed projection table: `values[code(w)]` is the projected
/// indicator on window `w`, or `None` if no completion was observed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionTable {
    pub m: usize,
    pub values: Vec<Option<bool>>,
    /// Two sequences with the same window and different indicator values.
    pub witness: Option<(Vec<i64>, Vec<i64>)>,
}

impl ProjectionTable {
    /// True when the projection is well defined.
    pub fn well_defined(&self) -> bool {
        self.witness.is_none()
    }

    /// Value on a window; unobserved windows read as false.
    pub fn get(&self, window: &[i64], symbols: &[i64]) -> bool {
        self.values[encode(window, symbols)].unwrap_or(false)
    }
}

/// Per-`m` verdict of a projection check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MVerdict {
    pub m: usize,
    pub pass: bool,
    pub witness: Option<(Vec<i64>, Vec<i64>)>,
}

/// Result of a monotonicity check over `m = 1..=max_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub condition: String,
    /// Overall verdict over `m ≥ min_m`.
    pub pass: bool,
    pub min_m: usize,
    pub per_m: Vec<MVerdict>,
    #[serde(skip)]
    pub tables: Vec<ProjectionTable>,
}

impl MonotonicityReport {
    fn from_tables(condition: &str, min_m: usize, tables: Vec<ProjectionTable>) -> Self {
        let per_m: Vec<MVerdict> = tables
            .iter()
            .map(|t| MVerdict { m: t.m, pass: t.well_defined(), witness: t.witness.clone() })
            .collect();
        let pass = per_m.iter().filter(|v| v.m >= min_m).all(|v| v.pass);
        Self { condition: condition.to_string(), pass, min_m, per_m, tables }
    }

    /// The table for `m`, if computed.
    pub fn table(&self, m: usize) -> Option<&ProjectionTable> {
        self.tables.iter().find(|t| t.m == m)
    }
}

type Slot = Option<(bool, usize, usize)>;

fn merge_slots(a: &mut [Slot], b: Vec<Slot>, witness: &mut Option<(Slot, Slot)>) {
    for (x, y) in a.iter_mut().zip(b) {
        match (*x, y) {
            (None, y) => *x = y,
            (Some((vx, _, _)), Some((vy, _, _))) if vx != vy && witness.is_none() => *witness = Some((*x, y)),
            _ => {}
        }
    }
}

/// Build a projection table for one `m` by scanning sequences of length
/// `base + m + extra` for every base in `bases`. A slot records the value,
/// the code and the length of the first sequence that reached it.
fn projection(
    symbols: &[i64],
    m: usize,
    bases: &[usize],
    extra: usize,
    condition: &(dyn Fn(&[i64], usize) -> bool + Sync),
    value: &(dyn Fn(&[i64], usize) -> bool + Sync),
) -> ProjectionTable {
    let d = symbols.len();
    let slots = d.pow(m as u32);
    let mut values: Vec<Slot> = vec![None; slots];
    let mut witness: Option<(Slot, Slot)> = None;
    for &n in bases {
        let len = n + m + extra;
        let total = d.pow(len as u32);
        let (local, local_witness) = (0..total)
            .into_par_iter()
            .fold(
                || (vec![None; slots], None),
                |(mut vals, mut wit): (Vec<Slot>, Option<(Slot, Slot)>), code| {
                    if wit.is_some() {
                        return (vals, wit);
                    }
                    let seq = decode(code, d, len, symbols);
                    if condition(&seq, n) {
                        let key = encode(&seq[n..n + m], symbols);
                        let new = Some((value(&seq, n), code, len));
                        match vals[key] {
                            None => vals[key] = new,
                            Some((old, _, _)) if Some(old) != new.map(|s| s.0) => wit = Some((vals[key], new)),
                            _ => {}
                        }
                    }
                    (vals, wit)
                },
            )
            .reduce(
                || (vec![None; slots], None),
                |(mut a, wa), (b, wb)| {
                    let mut wit = wa.or(wb);
                    merge_slots(&mut a, b, &mut wit);
                    (a, wit)
                },
            );
        if witness.is_none() {
            witness = local_witness;
        }
        merge_slots(&mut values, local, &mut witness);
    }
    let witness = witness.map(|(a, b)| {
        let seq = |s: Slot| s.map(|(_, code, len)| decode(code, d, len, symbols)).unwrap_or_default();
        (seq(a), seq(b))
    });
    ProjectionTable { m, values: values.into_iter().map(|s| s.map(|(v, _, _)| v)).collect(), witness }
}

/// Check `F_n ∩ F_{n+m} = E'_{n,n+m} ∩ F_{n+m}` for `m = 1..=max_m`: on
/// `F_m`, the indicator of `F_0` must depend on `ξ_1..ξ_m` only. The overall
/// verdict covers `m ≥ min_m`.
pub fn check_future_monotonicity(
    alphabet: &Alphabet,
    future: &TruncatedEvent,
    max_m: usize,
    min_m: usize,
) -> Result<MonotonicityReport, OracleError> {
    check_window(future, alphabet.symbols(), &[0, 1], 1)?;
    let symbols = alphabet.symbols();
    let l = future.lookahead();
    guard(symbols.len(), (1..=max_m).map(|m| m + l))?;
    let tables = (1..=max_m)
        .map(|m| {
            projection(symbols, m, &[0], l, &|seq: &[i64], n: usize| future.eval(seq, n + m), &|seq: &[i64], n: usize| {
                future.eval(seq, n)
            })
        })
        .collect();
    Ok(MonotonicityReport::from_tables("F_n ∩ F_{n+m} = E'_{n,n+m} ∩ F_{n+m}", min_m, tables))
}

/// Reports of both conditions for a past/future pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PastFutureReport {
    pub pass: bool,
    pub future_factor: MonotonicityReport,
    pub past_factor: MonotonicityReport,
}

/// Check `A_n ∩ A_{n+m} = H_n ∩ E'_{n,n+m} ∩ A_{n+m}` and
/// `A_n ∩ H_{n+m} = A_n ∩ E''_{n,n+m}` for `m = 1..=max_m` at every base
/// `n ≤ n_max`, with one projection table per `m` shared across bases.
pub fn check_past_future_conditions(
    alphabet: &Alphabet,
    past: &TruncatedEvent,
    future: &TruncatedEvent,
    max_m: usize,
    n_max: usize,
    min_m: usize,
) -> Result<PastFutureReport, OracleError> {
    let symbols = alphabet.symbols();
    check_window(past, symbols, &(0..=n_max.max(2)).collect::<Vec<_>>(), 1)?;
    check_window(future, symbols, &[0, 1], 1)?;
    let l = future.lookahead();
    guard(symbols.len(), (1..=max_m).flat_map(|m| (0..=n_max).map(move |n| n + m + l)))?;
    let bases: Vec<usize> = (0..=n_max).collect();
    let mut future_factor = Vec::new();
    let mut past_factor = Vec::new();
    for m in 1..=max_m {
        future_factor.push(projection(
            symbols,
            m,
            &bases,
            l,
            &|seq: &[i64], n: usize| past.eval(seq, n) && past.eval(seq, n + m) && future.eval(seq, n + m),
            &|seq: &[i64], n: usize| future.eval(seq, n),
        ));
        past_factor.push(projection(
            symbols,
            m,
            &bases,
            l,
            &|seq: &[i64], n: usize| past.eval(seq, n) && future.eval(seq, n),
            &|seq: &[i64], n: usize| past.eval(seq, n + m),
        ));
    }
    let future_factor = MonotonicityReport::from_tables("A_n ∩ A_{n+m} = H_n ∩ E'_{n,n+m} ∩ A_{n+m}", min_m, future_factor);
    let past_factor = MonotonicityReport::from_tables("A_n ∩ H_{n+m} = A_n ∩ E''_{n,n+m}", min_m, past_factor);
    Ok(PastFutureReport { pass: future_factor.pass && past_factor.pass, future_factor, past_factor })
}

fn guard(d: usize, lens: impl Iterator<Item = usize>) -> Result<(), OracleError> {
    let count: u128 = lens.map(|len| (d as u128).pow(len as u32)).sum();
    if count > ENUMERATION_GUARD {
        return Err(OracleError::Size { count, guard: ENUMERATION_GUARD });
    }
    Ok(())
}

/// `Pr(E_{0,n})` for `n = 1..=n_max`, with
/// `E_{0,n} = E'_{0,n} ∩ E''_{0,n} ∩ ⋂_{j} (E''_{0,j} ∩ E'_{j,n})^c` over
/// `min_sep ≤ j < n`. `E''` is omitted when `past_factor` is `None`.
pub fn e_probabilities(
    alphabet: &Alphabet,
    future_factor: &MonotonicityReport,
    past_factor: Option<&MonotonicityReport>,
    n_max: usize,
    min_sep: usize,
) -> Result<Vec<BigRational>, OracleError> {
    let weights = IntegerWeights::new(alphabet)?;
    let symbols = alphabet.symbols();
    let d = symbols.len();
    let table = |r: &MonotonicityReport, m: usize| -> Result<ProjectionTable, OracleError> {
        let t = r.table(m).ok_or(OracleError::Projection { m })?;
        if !t.well_defined() {
            return Err(OracleError::Projection { m });
        }
        Ok(t.clone())
    };
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let js: Vec<usize> = (min_sep.max(1)..n).collect();
        let ea: Vec<ProjectionTable> = (1..=n).map(|m| table(future_factor, m)).collect::<Result<_, _>>()?;
        let eb: Option<Vec<ProjectionTable>> = match past_factor {
            Some(r) => Some((1..=n).map(|m| table(r, m)).collect::<Result<_, _>>()?),
            None => None,
        };
        let hb = |w: &[i64]| eb.as_ref().is_none_or(|t| t[w.len() - 1].get(w, symbols));
        let mut num = BigUint::zero();
        for code in 0..d.pow(n as u32) {
            let w = decode(code, d, n, symbols);
            let mut hit = ea[n - 1].get(&w, symbols) && hb(&w);
            for &j in &js {
                if !hit {
                    break;
                }
                if hb(&w[..j]) && ea[n - j - 1].get(&w[j..], symbols) {
                    hit = false;
                }
            }
            if hit {
                num += weights.weight(&w);
            }
        }
        out.push(ratio(&num, &weights.denominator(n)));
    }
    Ok(out)
}

/// Exact check that the gap law is proportional to `Pr(E_{0,n})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapLawReport {
    pub pass: bool,
    pub gap_pmf: Vec<String>,
    pub e_prob: Vec<String>,
    pub ratios: Vec<Option<String>>,
    pub constant: Option<String>,
}

/// Compare `gap_pmf(n)` with `a Pr(E_{0,n})` for one rational `a` over every
/// `n` where either side has positive mass.
pub fn verify_gap_law(gap_pmf: &[BigRational], e_prob: &[BigRational]) -> GapLawReport {
    let mut constant: Option<BigRational> = None;
    let mut pass = true;
    let mut ratios = Vec::new();
    for (g, e) in gap_pmf.iter().zip(e_prob) {
        if g.is_zero() && e.is_zero() {
            ratios.push(None);
            continue;
        }
        if e.is_zero() {
            pass = false;
            ratios.push(None);
            continue;
        }
        let r = g / e;
        match &constant {
            None => constant = Some(r.clone()),
            Some(c) if *c != r => pass = false,
            _ => {}
        }
        ratios.push(Some(rational_string(&r)));
    }
    if constant.as_ref().is_none_or(|c| !c.is_positive()) {
        pass = false;
    }
    GapLawReport {
        pass,
        gap_pmf: gap_pmf.iter().map(rational_string).collect(),
        e_prob: e_prob.iter().map(rational_string).collect(),
        ratios,
        constant: constant.map(|c| rational_string(&c)),
    }
}

/// Named event pairs available to the oracle and the runner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventPreset {
    /// `Ω` and `F_n`: nonnegative partial sums up to the lookahead.
    Example1a,
    /// `Ω` and `F'_n`: as (a) and additionally `ξ_{n+2} = 0`.
    Example1b,
    /// As (b), with break times at least 2 apart.
    Example1c,
    /// Strict past record and strict future minimum.
    Rw2,
    /// `Ω` and `ξ_{n+i} ≤ i` for `i` up to the lookahead.
    BinsBasic,
    /// `Ω` and `Ω`.
    Always,
}

impl EventPreset {
    /// Parse a preset name.
    pub fn parse(name: &str) -> Result<Self, OracleError> {
        match name {
            "example1a" => Ok(Self::Example1a),
            "example1b" => Ok(Self::Example1b),
            "example1c" => Ok(Self::Example1c),
            "rw2" => Ok(Self::Rw2),
            "bins_basic" | "bins-basic" => Ok(Self::BinsBasic),
            "always" => Ok(Self::Always),
            other => Err(OracleError::UnknownPreset(other.to_string())),
        }
    }

    /// Minimum separation between break times.
    pub fn min_separation(self) -> usize {
        match self {
            Self::Example1c => 2,
            _ => 1,
        }
    }

    /// The past and future events truncated at `lookahead`.
    pub fn events(self, lookahead: usize) -> (TruncatedEvent, TruncatedEvent) {
        let l = lookahead;
        match self {
            Self::Example1a => (TruncatedEvent::always_past(), nonneg_sums("F", l, false)),
            Self::Example1b | Self::Example1c => (TruncatedEvent::always_past(), nonneg_sums("F'", l, true)),
            Self::Rw2 => (
                TruncatedEvent::past("strict record", None, |seq, n| {
                    let mut s = 0i64;
                    let mut best = i64::MIN;
                    for &x in &seq[..n] {
                        best = best.max(s);
                        s += x;
                    }
                    n == 0 || s > best
                }),
                TruncatedEvent::future("strict future minimum", l, move |seq, n| {
                    let mut s = 0i64;
                    seq[n..n + l].iter().all(|&x| {
                        s += x;
                        s > 0
                    })
                }),
            ),
            Self::BinsBasic => (
                TruncatedEvent::always_past(),
                TruncatedEvent::future("ξ_{n+i} ≤ i", l, move |seq, n| {
                    seq[n..n + l].iter().enumerate().all(|(i, &x)| x <= i as i64 + 1)
                }),
            ),
            Self::Always => (TruncatedEvent::always_past(), TruncatedEvent::future("always", l, |_, _| true)),
        }
    }
}

fn nonneg_sums(name: &str, l: usize, zero_second: bool) -> TruncatedEvent {
    TruncatedEvent::future(name, l, move |seq, n| {
        let mut s = 0i64;
        let sums = seq[n..n + l].iter().all(|&x| {
            s += x;
            s >= 0
        });
        sums && (!zero_second || l < 2 || seq[n + 1] == 0)
    })
}

/// Replays truncated events on a [`DrivingStream`] through the generic scanner.
///
/// The state is the history `ξ_1..ξ_n`; the trace is the number of steps
/// since the last break time.
#[derive(Clone, Debug)]
pub struct TruncatedAdapter {
    pub past: TruncatedEvent,
}

impl ProcessAdapter for TruncatedAdapter {
    type Driving = DrivingStream;
    type State = Vec<i64>;
    type Trace = usize;

    fn initial(&self) -> Vec<i64> {
        Vec::new()
    }

    fn advance(&self, driving: &DrivingStream, state: &mut Vec<i64>, n: u64) {
        state.push(driving.int_at(n as i64 + 1));
    }

    fn past(&self, state: &Vec<i64>, n: u64) -> bool {
        self.past.eval(state, n as usize)
    }

    fn functional(&self, base: &Vec<i64>, current: &Vec<i64>) -> usize {
        current.len() - base.len()
    }
}

/// A truncated future event read off a [`DrivingStream`].
#[derive(Clone, Debug)]
pub struct TruncatedFuture {
    pub future: TruncatedEvent,
}

impl FutureEvent for TruncatedFuture {
    type Driving = DrivingStream;

    fn evaluate(&self, driving: &DrivingStream, n: u64, _horizon: u64) -> FutureVerdict {
        let l = self.future.lookahead();
        let seq = driving.ints(1, n as i64 + l as i64);
        if self.future.eval(&seq, n as usize) {
            FutureVerdict::Occurs
        } else {
            FutureVerdict::Fails(l as u64)
        }
    }
}

/// Kolmogorov distance between the exact law of `τ_1 - τ_0` (given both lie
/// in `0..=T`) and the same quantity from `replicas` simulated sequences
/// scanned by the generic scanner.
pub fn simulation_cross_check(
    alphabet: &Alphabet,
    law: &ExactLaw,
    past: &TruncatedEvent,
    future: &TruncatedEvent,
    replicas: u64,
    seed: u64,
) -> f64 {
    let mut exact = vec![BigUint::zero(); law.t_max + 1];
    for (o, m) in &law.joint {
        if let (Some(a), Some(b)) = (o.tau0, o.tau1) {
            exact[b - a] += m;
        }
    }
    let exact_total = exact.iter().fold(BigUint::zero(), |a, b| a + b);
    let adapter = TruncatedAdapter { past: past.clone() };
    let fut = TruncatedFuture { future: future.clone() };
    let cfg = BreakConfig::new(future.lookahead().max(1) as u64, law.t_max as u64)
        .with_min_separation(law.min_separation as u64)
        .with_traces(false);
    let counts = (0..replicas)
        .into_par_iter()
        .fold(
            || vec![0u64; law.t_max + 1],
            |mut c, r| {
                let stream = DrivingStream::new(crate::core::hash_key(seed, 0x4F52, r as i64, 0), Law::Finite(alphabet.clone()));
                let report = crate::regen::scan_break_times(&adapter, &stream, &fut, &cfg);
                if report.taus.len() >= 2 {
                    c[(report.taus[1] - report.taus[0]) as usize] += 1;
                }
                c
            },
        )
        .reduce(|| vec![0u64; law.t_max + 1], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    let sim_total: u64 = counts.iter().sum();
    let mut dist: f64 = 0.0;
    let mut ce = BigRational::zero();
    let mut cs = 0u64;
    for g in 0..=law.t_max {
        ce += ratio(&exact[g], &exact_total);
        cs += counts[g];
        let diff = crate::core::rational_to_f64(&ce) - cs as f64 / sim_total.max(1) as f64;
        dist = dist.max(diff.abs());
    }
    dist
}

/// Full exact report for a preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub preset: EventPreset,
    pub symbols: Vec<i64>,
    pub weights: Vec<String>,
    pub t_max: usize,
    pub lookahead: usize,
    pub min_separation: usize,
    pub total_mass: String,
    pub monotonicity: Option<MonotonicityReport>,
    pub past_future: PastFutureReport,
    pub iid: IidVerdict,
    pub gap_law: Option<GapLawReport>,
    pub gap_law_error: Option<String>,
    /// `Pr(ξ_{τ_1+1} = 0 | τ_1 - τ_0 = 1)`.
    pub next_zero_after_unit_gap: Option<String>,
    pub joint: Vec<JointEntry>,
    pub cross_check_ks: Option<f64>,
}

/// One line of the joint law of `(τ_0, τ_1, segment)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointEntry {
    pub tau0: Option<usize>,
    pub tau1: Option<usize>,
    pub segment: Vec<i64>,
    pub mass: String,
}

/// Parameters of an oracle run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OraclePlan {
    pub t_max: usize,
    pub lookahead: usize,
    pub max_m: usize,
    pub n_max: usize,
    pub cross_check_replicas: u64,
    pub seed: u64,
}

/// Run every exact check for a preset.
pub fn run_preset(preset: EventPreset, alphabet: &Alphabet, plan: &OraclePlan) -> Result<OracleReport, OracleError> {
    let (past, future) = preset.events(plan.lookahead);
    let min_sep = preset.min_separation();
    let law = enumerate_exact(alphabet, plan.t_max, &past, &future, min_sep)?;
    let monotonicity = if past.is_trivial_past() {
        Some(check_future_monotonicity(alphabet, &future, plan.max_m, min_sep)?)
    } else {
        None
    };
    let past_future = check_past_future_conditions(alphabet, &past, &future, plan.max_m, plan.n_max, min_sep)?;
    let iid = verify_iid_segments_exact(&law)?;
    let gap = law.gap_pmf()?;
    let eb = if past.is_trivial_past() { None } else { Some(&past_future.past_factor) };
    let (gap_law, gap_law_error) = match e_probabilities(alphabet, &past_future.future_factor, eb, gap.len().min(plan.max_m), min_sep) {
        Ok(e) => (Some(verify_gap_law(&gap[..e.len()], &e)), None),
        Err(err) => (None, Some(err.to_string())),
    };
    let cross_check_ks = (plan.cross_check_replicas > 0)
        .then(|| simulation_cross_check(alphabet, &law, &past, &future, plan.cross_check_replicas, plan.seed));
    Ok(OracleReport {
        preset,
        symbols: alphabet.symbols().to_vec(),
        weights: alphabet.exact_weights().unwrap_or(&[]).iter().map(rational_string).collect(),
        t_max: plan.t_max,
        lookahead: plan.lookahead,
        min_separation: min_sep,
        total_mass: rational_string(&law.total_mass()),
        monotonicity,
        past_future,
        iid,
        gap_law,
        gap_law_error,
        next_zero_after_unit_gap: law.next_symbol_given_gap(1, 0).map(|r| rational_string(&r)),
        joint: law
            .joint_strings()
            .into_iter()
            .map(|(o, mass)| JointEntry { tau0: o.tau0, tau1: o.tau1, segment: o.segment, mass })
            .collect(),
        cross_check_ks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quarter_walk() -> Alphabet {
        Alphabet::walk_rational((1, 4), (1, 4)).unwrap()
    }

    #[test]
    fn degenerate_alphabet_breaks_at_every_index() {
        let a = Alphabet::rational_pairs(vec![1], &[(1, 1)]).unwrap();
        let (h, f) = EventPreset::Always.events(2);
        let law = enumerate_exact(&a, 3, &h, &f, 1).unwrap();
        assert!(law.total_mass().is_one());
        let o = Outcome { tau0: Some(0), tau1: Some(1), segment: vec![1] };
        assert_eq!(law.joint.get(&o), Some(&law.denominator));
    }

    #[test]
    fn masses_sum_to_one() {
        let (h, f) = EventPreset::Example1a.events(3);
        let law = enumerate_exact(&quarter_walk(), 4, &h, &f, 1).unwrap();
        assert!(law.total_mass().is_one());
    }

    #[test]
    fn guard_is_enforced() {
        let (h, f) = EventPreset::Example1a.events(10);
        let err = enumerate_exact(&quarter_walk(), 10, &h, &f, 1).unwrap_err();
        assert!(matches!(err, OracleError::Size { .. }));
    }

    #[test]
    fn float_alphabet_is_rejected() {
        let a = Alphabet::float(vec![0, 1], vec![0.5, 0.5]).unwrap();
        let (h, f) = EventPreset::Always.events(1);
        assert_eq!(enumerate_exact(&a, 2, &h, &f, 1).unwrap_err(), OracleError::NotExact);
    }

    #[test]
    fn future_reading_past_is_caught() {
        let bad = TruncatedEvent::past("peeks", None, |seq, n| seq.get(n).copied().unwrap_or(0) >= 0);
        let err = check_window(&bad, &[-1, 0, 1], &[0, 1, 2], 1).unwrap_err();
        assert!(matches!(err, OracleError::Measurability { .. }));
    }

    #[test]
    fn example_1a_small_instance_passes() {
        let (h, f) = EventPreset::Example1a.events(3);
        let law = enumerate_exact(&quarter_walk(), 4, &h, &f, 1).unwrap();
        assert!(verify_iid_segments_exact(&law).unwrap().pass);
        let monotonicity = check_future_monotonicity(&quarter_walk(), &f, 4, 1).unwrap();
        assert!(monotonicity.pass);
    }

    #[test]
    fn example_1b_fails_at_m_equal_one() {
        let (_, f) = EventPreset::Example1b.events(3);
        let monotonicity = check_future_monotonicity(&quarter_walk(), &f, 3, 1).unwrap();
        assert!(!monotonicity.pass);
        assert!(!monotonicity.per_m[0].pass);
        let (a, b) = monotonicity.per_m[0].witness.clone().unwrap();
        assert_eq!(a[0], b[0]);
    }

    #[test]
    fn gap_law_constant_detection() {
        let half = BigRational::new(1.into(), 2.into());
        let quarter = BigRational::new(1.into(), 4.into());
        let r = verify_gap_law(&[half.clone(), quarter.clone()], &[half.clone(), quarter.clone()]);
        assert!(r.pass);
        assert_eq!(r.constant.as_deref(), Some("1/1"));
        let r = verify_gap_law(&[half.clone(), half.clone()], &[half, quarter]);
        assert!(!r.pass);
    }
}
