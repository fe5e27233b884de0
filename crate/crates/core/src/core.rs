//! Reproducible i.i.d. driving streams.
//!
//! Every random quantity in the workbench is a pure function of a 64-bit
//! seed, a lane label and an integer index. Nothing is generated
//! sequentially, so a stream can be shifted in O(1) and the future of any
//! index can be probed repeatedly without consuming state.

use std::fmt;

use num::{BigInt, BigRational, One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by stream construction and indexed access.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("index {0} is below 1; driving sequences are indexed from 1")]
    Index(i64),
    #[error("window range {lo}..={hi} is empty or starts below 1")]
    Range { lo: i64, hi: i64 },
    #[error("invalid alphabet: {0}")]
    Alphabet(String),
    #[error("invalid law: {0}")]
    Law(String),
}

/// The splitmix64 finalizer.
#[inline]
pub const fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a `(seed, lane, index, sub)` key to 64 uniformly distributed bits.
#[inline]
pub fn hash_key(seed: u64, lane: u64, index: i64, sub: u64) -> u64 {
    let a = mix64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let b = mix64(a ^ lane.wrapping_mul(0xD1B5_4A32_D192_ED03));
    let c = mix64(b ^ (index as u64).wrapping_mul(0x8CB9_2BA7_2F3D_8DD7));
    mix64(c ^ sub.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5851_F42D_4C95_7F2D)
}

/// Map 64 random bits to a uniform double in `[0, 1)` with 53 bits of resolution.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Largest value `-ln(1 - u)` can take for `u` produced by [`unit_f64`].
pub const EXP_UNIT_MAX: f64 = 53.0 * std::f64::consts::LN_2;

/// Exponential variate with the given rate by inverse CDF.
#[inline]
pub fn exp_from_bits(bits: u64, rate: f64) -> f64 {
    -(1.0 - unit_f64(bits)).ln() / rate
}

/// Geometric variate on `{1, 2, ...}` with `P(X > k) = r^k`.
#[inline]
pub fn geometric_from_bits(bits: u64, r: f64) -> u64 {
    if r <= 0.0 {
        return 1;
    }
    let u = unit_f64(bits);
    let k = ((1.0 - u).ln() / r.ln()).floor();
    if k >= (u64::MAX / 2) as f64 {
        u64::MAX / 2
    } else {
        1 + k as u64
    }
}

/// Binary digits of a probability, used to draw 64 exact Bernoulli bits at once.
///
/// A bit is one exactly when an infinite uniform bit string is smaller than
/// the binary expansion of `prob`; lanes are resolved at the first digit where
/// they differ, so a word typically needs a handful of random words.
#[derive(Clone, Debug, PartialEq)]
pub struct BernoulliDigits {
    prob: f64,
    digits: Vec<bool>,
}

impl BernoulliDigits {
    /// Expand `prob` into its (finite) binary representation.
    pub fn new(prob: f64) -> Self {
        let prob = prob.clamp(0.0, 1.0);
        let mut digits = Vec::new();
        if prob < 1.0 {
            let mut b = prob;
            while b > 0.0 {
                b *= 2.0;
                let d = b >= 1.0;
                if d {
                    b -= 1.0;
                }
                digits.push(d);
            }
            while digits.last() == Some(&false) {
                digits.pop();
            }
        }
        Self { prob, digits }
    }

    /// The probability these digits encode.
    pub fn prob(&self) -> f64 {
        self.prob
    }

    /// Draw 64 independent Bernoulli bits; `word_bits(d)` supplies the d-th random word.
    #[inline]
    pub fn draw(&self, mut word_bits: impl FnMut(u64) -> u64) -> u64 {
        if self.prob >= 1.0 {
            return u64::MAX;
        }
        let mut result = 0u64;
        let mut undecided = u64::MAX;
        for (d, &bit) in self.digits.iter().enumerate() {
            let u = word_bits(d as u64);
            if bit {
                result |= undecided & !u;
                undecided &= u;
            } else {
                undecided &= !u;
            }
            if undecided == 0 {
                break;
            }
        }
        result
    }

    /// Draw the bits for `(seed, lane, index, word)`.
    #[inline]
    pub fn draw_keyed(&self, seed: u64, lane: u64, index: i64, word: u64) -> u64 {
        let base = hash_key(seed, lane, index, word);
        self.draw(|d| mix64(base ^ (d + 1).wrapping_mul(0xA076_1D64_78BD_642F)))
    }
}

/// A finite symbol set with probabilities; exact rational weights are kept
/// when the alphabet is meant for enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct Alphabet {
    symbols: Vec<i64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    exact: Option<Vec<BigRational>>,
}

impl Alphabet {
    /// Build a floating-point alphabet; weights must sum to 1 within 1e-12.
    pub fn float(symbols: Vec<i64>, weights: Vec<f64>) -> Result<Self, CoreError> {
        Self::check_shape(&symbols, weights.len())?;
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CoreError::Alphabet("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(CoreError::Alphabet(format!("weights sum to {total}, not 1")));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(CoreError::Alphabet("no symbol has positive weight".into()));
        }
        Ok(Self::assemble(symbols, weights, None))
    }

    /// Build an alphabet with exact rational weights that sum to exactly 1.
    pub fn rational(symbols: Vec<i64>, weights: Vec<BigRational>) -> Result<Self, CoreError> {
        Self::check_shape(&symbols, weights.len())?;
        if weights.iter().any(|w| w.is_negative()) {
            return Err(CoreError::Alphabet("weights must be nonnegative".into()));
        }
        let total = weights.iter().fold(BigRational::zero(), |acc, w| acc + w);
        if !total.is_one() {
            return Err(CoreError::Alphabet(format!("weights sum to {total}, not exactly 1")));
        }
        if !weights.iter().any(|w| w.is_positive()) {
            return Err(CoreError::Alphabet("no symbol has positive weight".into()));
        }
        let floats = weights.iter().map(rational_to_f64).collect();
        Ok(Self::assemble(symbols, floats, Some(weights)))
    }

    /// Convenience constructor from `(numerator, denominator)` pairs.
    pub fn rational_pairs(symbols: Vec<i64>, pairs: &[(i64, i64)]) -> Result<Self, CoreError> {
        let mut weights = Vec::with_capacity(pairs.len());
        for &(num, den) in pairs {
            if den == 0 {
                return Err(CoreError::Alphabet("zero denominator".into()));
            }
            weights.push(BigRational::new(BigInt::from(num), BigInt::from(den)));
        }
        Self::rational(symbols, weights)
    }

    /// The walk law `P(+1)=p, P(-1)=q, P(0)=1-p-q` in exact arithmetic.
    pub fn walk_rational(p: (i64, i64), q: (i64, i64)) -> Result<Self, CoreError> {
        let p = BigRational::new(p.0.into(), p.1.into());
        let q = BigRational::new(q.0.into(), q.1.into());
        let zero = BigRational::one() - &p - &q;
        Self::rational(vec![-1, 0, 1], vec![q, zero, p])
    }

    fn check_shape(symbols: &[i64], n_weights: usize) -> Result<(), CoreError> {
        if symbols.is_empty() {
            return Err(CoreError::Alphabet("empty symbol list".into()));
        }
        if symbols.len() != n_weights {
            return Err(CoreError::Alphabet(format!(
                "{} symbols but {} weights",
                symbols.len(),
                n_weights
            )));
        }
        let mut sorted = symbols.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != symbols.len() {
            return Err(CoreError::Alphabet("duplicate symbols".into()));
        }
        Ok(())
    }

    fn assemble(symbols: Vec<i64>, weights: Vec<f64>, exact: Option<Vec<BigRational>>) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self { symbols, weights, cumulative, exact }
    }

    /// The symbols in declaration order.
    pub fn symbols(&self) -> &[i64] {
        &self.symbols
    }

    /// Floating-point weights in declaration order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Exact weights, present only for rational alphabets.
    pub fn exact_weights(&self) -> Option<&[BigRational]> {
        self.exact.as_deref()
    }

    /// Number of symbols.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    /// Always false for a validated alphabet.
    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Mean of the symbol values.
    pub fn mean(&self) -> f64 {
        self.symbols.iter().zip(&self.weights).map(|(s, w)| *s as f64 * w).sum()
    }

    /// Inverse-CDF sample from 64 random bits.
    #[inline]
    pub fn sample_bits(&self, bits: u64) -> i64 {
        let u = unit_f64(bits);
        for (i, c) in self.cumulative.iter().enumerate() {
            if u < *c && self.weights[i] > 0.0 {
                return self.symbols[i];
            }
        }
        let last = self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
        self.symbols[last]
    }
}

/// Convert an exact rational to the nearest double (via decimal-free scaling).
pub fn rational_to_f64(r: &BigRational) -> f64 {
    use num::ToPrimitive;
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => r.to_f64().unwrap_or(f64::NAN),
    }
}

/// A single draw from a [`Law`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Symbol {
    Int(i64),
    Real(f64),
    Tuple(Vec<Symbol>),
}

impl Symbol {
    /// The integer value, if this is an integer symbol.
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Symbol::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// The value as a double for scalar symbols.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Symbol::Int(v) => Some(*v as f64),
            Symbol::Real(v) => Some(*v),
            Symbol::Tuple(_) => None,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Int(v) => write!(f, "{v}"),
            Symbol::Real(v) => write!(f, "{v}"),
            Symbol::Tuple(items) => {
                write!(f, "(")?;
                for (i, s) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{s}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// The common law of the driving variables.
#[derive(Clone, Debug, PartialEq)]
pub enum Law {
    Finite(Alphabet),
    Uniform,
    Exponential { rate: f64 },
    /// Supported on `{1, 2, ...}` with `P(X > k) = r^k`.
    Geometric { r: f64 },
    Product(Vec<Law>),
}

impl Law {
    /// Check parameter ranges.
    pub fn validate(&self) -> Result<(), CoreError> {
        match self {
            Law::Finite(_) | Law::Uniform => Ok(()),
            Law::Exponential { rate } if rate.is_finite() && *rate > 0.0 => Ok(()),
            Law::Exponential { rate } => Err(CoreError::Law(format!("exponential rate {rate} must be positive"))),
            Law::Geometric { r } if (0.0..1.0).contains(r) => Ok(()),
            Law::Geometric { r } => Err(CoreError::Law(format!("geometric ratio {r} must lie in [0,1)"))),
            Law::Product(parts) if parts.is_empty() => Err(CoreError::Law("empty product law".into())),
            Law::Product(parts) => parts.iter().try_for_each(Law::validate),
        }
    }

    /// Sample from 64 random bits; product components hash the bits further.
    pub fn sample_bits(&self, bits: u64) -> Symbol {
        match self {
            Law::Finite(a) => Symbol::Int(a.sample_bits(bits)),
            Law::Uniform => Symbol::Real(unit_f64(bits)),
            Law::Exponential { rate } => Symbol::Real(exp_from_bits(bits, *rate)),
            Law::Geometric { r } => Symbol::Int(geometric_from_bits(bits, *r) as i64),
            Law::Product(parts) => Symbol::Tuple(
                parts
                    .iter()
                    .enumerate()
                    .map(|(c, law)| law.sample_bits(mix64(bits ^ (c as u64 + 1).wrapping_mul(0xE703_7ED1_A0B4_28DB))))
                    .collect(),
            ),
        }
    }
}

/// Serializable law description used in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Finite { symbols: Vec<i64>, weights: Vec<WeightSpec> },
    Uniform,
    Exponential { rate: f64 },
    Geometric { r: f64 },
    Product { parts: Vec<LawSpec> },
}

/// A weight written either as a number or as an exact `"num/den"` string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Float(f64),
    Exact(String),
}

impl WeightSpec {
    fn exact(&self) -> Option<BigRational> {
        match self {
            WeightSpec::Float(_) => None,
            WeightSpec::Exact(s) => parse_rational(s),
        }
    }
}

/// Parse `"num/den"` or an integer string into an exact rational.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                None
            } else {
                Some(BigRational::new(n, d))
            }
        }
        None => s.parse::<BigInt>().ok().map(BigRational::from_integer),
    }
}

impl TryFrom<&LawSpec> for Law {
    type Error = CoreError;

    fn try_from(spec: &LawSpec) -> Result<Self, CoreError> {
        let law = match spec {
            LawSpec::Finite { symbols, weights } => {
                if weights.iter().all(|w| matches!(w, WeightSpec::Exact(_))) {
                    let exact: Option<Vec<_>> = weights.iter().map(WeightSpec::exact).collect();
                    let exact = exact.ok_or_else(|| CoreError::Alphabet("unparseable rational weight".into()))?;
                    Law::Finite(Alphabet::rational(symbols.clone(), exact)?)
                } else {
                    let mut floats = Vec::with_capacity(weights.len());
                    for w in weights {
                        floats.push(match w {
                            WeightSpec::Float(v) => *v,
                            WeightSpec::Exact(s) => rational_to_f64(
                                &parse_rational(s).ok_or_else(|| CoreError::Alphabet(format!("bad weight {s:?}")))?,
                            ),
                        });
                    }
                    Law::Finite(Alphabet::float(symbols.clone(), floats)?)
                }
            }
            LawSpec::Uniform => Law::Uniform,
            LawSpec::Exponential { rate } => Law::Exponential { rate: *rate },
            LawSpec::Geometric { r } => Law::Geometric { r: *r },
            LawSpec::Product { parts } => Law::Product(parts.iter().map(Law::try_from).collect::<Result<_, _>>()?),
        };
        law.validate()?;
        Ok(law)
    }
}

/// An indexed i.i.d. sequence `ξ_1, ξ_2, ...` with shift semantics.
#[derive(Clone, Debug, PartialEq)]
pub struct DrivingStream {
    pub seed: u64,
    pub law: Law,
    pub origin_offset: i64,
}

/// Lane reserved for the scalar driving symbols of a [`DrivingStream`].
pub const LANE_STREAM: u64 = 0x5354_5245_414D;

impl DrivingStream {
    /// A stream with no shift applied.
    pub fn new(seed: u64, law: Law) -> Self {
        Self { seed, law, origin_offset: 0 }
    }

    /// `ξ_n`; fails for `n < 1`.
    pub fn sample_at(&self, n: i64) -> Result<Symbol, CoreError> {
        if n < 1 {
            return Err(CoreError::Index(n));
        }
        Ok(self.law.sample_bits(self.bits_at(n)))
    }

    /// `ξ_n` for integer-valued finite or geometric laws, without allocation.
    #[inline]
    pub fn int_at(&self, n: i64) -> i64 {
        let bits = self.bits_at(n);
        match &self.law {
            Law::Finite(a) => a.sample_bits(bits),
            Law::Geometric { r } => geometric_from_bits(bits, *r) as i64,
            other => other.sample_bits(bits).as_f64().map(|v| v as i64).unwrap_or(0),
        }
    }

    /// `ξ_n` for scalar laws as a double.
    #[inline]
    pub fn real_at(&self, n: i64) -> f64 {
        let bits = self.bits_at(n);
        match &self.law {
            Law::Finite(a) => a.sample_bits(bits) as f64,
            Law::Uniform => unit_f64(bits),
            Law::Exponential { rate } => exp_from_bits(bits, *rate),
            Law::Geometric { r } => geometric_from_bits(bits, *r) as f64,
            Law::Product(_) => f64::NAN,
        }
    }

    #[inline]
    fn bits_at(&self, n: i64) -> u64 {
        hash_key(self.seed, LANE_STREAM, n.wrapping_add(self.origin_offset), 0)
    }

    /// The shifted stream `θ^k`: `shift(k).sample_at(n) == sample_at(n + k)`.
    pub fn shift(&self, k: i64) -> Self {
        Self { seed: self.seed, law: self.law.clone(), origin_offset: self.origin_offset + k }
    }

    /// Materialize `ξ_m, ..., ξ_n`.
    pub fn window(&self, m: i64, n: i64) -> Result<Window, CoreError> {
        if m > n || m < 1 {
            return Err(CoreError::Range { lo: m, hi: n });
        }
        let values = (m..=n).map(|i| self.law.sample_bits(self.bits_at(i))).collect();
        Ok(Window { lo: m, hi: n, values })
    }

    /// Integer symbols `ξ_m, ..., ξ_n` (empty when `m > n`).
    pub fn ints(&self, m: i64, n: i64) -> Vec<i64> {
        (m..=n).map(|i| self.int_at(i)).collect()
    }
}

/// Random access to scalar driving symbols.
pub trait ScalarSource: Sync {
    /// `ξ_n` as a double.
    fn value_at(&self, n: i64) -> f64;

    /// `ξ_n` as an integer.
    fn int_value_at(&self, n: i64) -> i64 {
        self.value_at(n) as i64
    }
}

impl ScalarSource for DrivingStream {
    fn value_at(&self, n: i64) -> f64 {
        self.real_at(n)
    }

    fn int_value_at(&self, n: i64) -> i64 {
        self.int_at(n)
    }
}

/// A stream that agrees with `inside` on `lo..=hi` and with `outside` elsewhere.
///
/// Used to check that a quantity depends only on a declared window of the
/// driving sequence.
#[derive(Clone, Copy, Debug)]
pub struct Spliced<'a> {
    pub inside: &'a DrivingStream,
    pub outside: &'a DrivingStream,
    pub lo: i64,
    pub hi: i64,
}

impl ScalarSource for Spliced<'_> {
    fn value_at(&self, n: i64) -> f64 {
        if (self.lo..=self.hi).contains(&n) {
            self.inside.real_at(n)
        } else {
            self.outside.real_at(n)
        }
    }

    fn int_value_at(&self, n: i64) -> i64 {
        if (self.lo..=self.hi).contains(&n) {
            self.inside.int_at(n)
        } else {
            self.outside.int_at(n)
        }
    }
}

/// A materialized block `ξ_lo, ..., ξ_hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
    pub values: Vec<Symbol>,
}

impl Window {
    /// Build a window from integer symbols starting at index `lo`.
    pub fn from_ints(lo: i64, values: &[i64]) -> Self {
        Self {
            lo,
            hi: lo + values.len() as i64 - 1,
            values: values.iter().map(|v| Symbol::Int(*v)).collect(),
        }
    }

    /// Number of symbols.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when the window holds no symbols.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Append an adjacent window.
    pub fn concat(&self, other: &Window) -> Result<Window, CoreError> {
        if other.lo != self.hi + 1 {
            return Err(CoreError::Range { lo: self.hi + 1, hi: other.lo });
        }
        let mut values = self.values.clone();
        values.extend(other.values.iter().cloned());
        Ok(Window { lo: self.lo, hi: other.hi, values })
    }

    /// Integer values, or `None` if any symbol is not an integer.
    pub fn ints(&self) -> Option<Vec<i64>> {
        self.values.iter().map(Symbol::as_int).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_law() -> Law {
        Law::Finite(Alphabet::float(vec![-1, 0, 1], vec![0.2, 0.4, 0.4]).unwrap())
    }

    #[test]
    fn degenerate_law_is_constant() {
        let s = DrivingStream::new(3, Law::Finite(Alphabet::float(vec![1], vec![1.0]).unwrap()));
        for n in 1..200 {
            assert_eq!(s.sample_at(n).unwrap(), Symbol::Int(1));
        }
    }

    #[test]
    fn sampling_is_pure() {
        let s = DrivingStream::new(7, example_law());
        assert_eq!(s.sample_at(42).unwrap(), s.sample_at(42).unwrap());
        assert_eq!(s.clone().sample_at(42).unwrap(), s.sample_at(42).unwrap());
    }

    #[test]
    fn index_below_one_is_rejected() {
        let s = DrivingStream::new(7, example_law());
        assert_eq!(s.sample_at(0), Err(CoreError::Index(0)));
    }

    #[test]
    fn shift_composes() {
        let s = DrivingStream::new(11, example_law());
        assert_eq!(s.shift(0), s);
        assert_eq!(s.shift(1).sample_at(1).unwrap(), s.sample_at(2).unwrap());
        assert_eq!(s.shift(3).shift(4), s.shift(7));
        for n in 1..100 {
            assert_eq!(s.shift(5).int_at(n), s.int_at(n + 5));
        }
    }

    #[test]
    fn windows_align_and_concatenate() {
        let s = DrivingStream::new(5, example_law());
        assert_eq!(s.window(3, 3).unwrap().len(), 1);
        let w = s.window(1, 5).unwrap();
        assert_eq!(w.values[2], s.sample_at(3).unwrap());
        let joined = s.window(1, 3).unwrap().concat(&s.window(4, 6).unwrap()).unwrap();
        assert_eq!(joined, s.window(1, 6).unwrap());
        assert!(matches!(s.window(4, 3), Err(CoreError::Range { .. })));
    }

    #[test]
    fn alphabet_validation() {
        assert!(Alphabet::float(vec![0, 1], vec![0.5, 0.6]).is_err());
        assert!(Alphabet::float(vec![0, 1], vec![0.0, 0.0]).is_err());
        assert!(Alphabet::rational_pairs(vec![0, 1], &[(1, 3), (2, 3)]).is_ok());
        assert!(Alphabet::rational_pairs(vec![0, 1], &[(1, 3), (1, 3)]).is_err());
        assert!(Alphabet::float(vec![0, 0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn bernoulli_digits_expand_exactly() {
        assert_eq!(BernoulliDigits::new(0.75).digits, vec![true, true]);
        assert_eq!(BernoulliDigits::new(0.5).digits, vec![true]);
        assert!(BernoulliDigits::new(0.0).digits.is_empty());
        let ones = BernoulliDigits::new(1.0).draw_keyed(1, 2, 3, 4);
        assert_eq!(ones, u64::MAX);
        assert_eq!(BernoulliDigits::new(0.0).draw_keyed(1, 2, 3, 4), 0);
    }

    #[test]
    fn bernoulli_word_frequency() {
        let digits = BernoulliDigits::new(0.3);
        let mut ones = 0u64;
        let words = 20_000u64;
        for w in 0..words {
            ones += u64::from(digits.draw_keyed(9, 1, w as i64, 0).count_ones());
        }
        let n = (words * 64) as f64;
        let freq = ones as f64 / n;
        let se = (0.3f64 * 0.7 / n).sqrt();
        assert!((freq - 0.3).abs() < 5.0 * se, "freq {freq}");
    }

    #[test]
    fn geometric_tail_matches() {
        let n = 200_000;
        let mut exceed = [0usize; 4];
        for i in 0..n {
            let x = geometric_from_bits(hash_key(1, 2, i, 0), 0.5);
            assert!(x >= 1);
            for (k, e) in exceed.iter_mut().enumerate() {
                if x > k as u64 {
                    *e += 1;
                }
            }
        }
        for (k, e) in exceed.iter().enumerate() {
            let expect = 0.5f64.powi(k as i32);
            assert!((*e as f64 / n as f64 - expect).abs() < 0.005);
        }
    }

    #[test]
    fn law_spec_round_trip() {
        let spec: LawSpec = toml::from_str("type = \"finite\"\nsymbols = [-1, 0, 1]\nweights = [\"1/4\", \"1/2\", \"1/4\"]").unwrap();
        let law = Law::try_from(&spec).unwrap();
        match law {
            Law::Finite(a) => assert!(a.exact_weights().is_some()),
            _ => panic!("expected finite"),
        }
        let spec: LawSpec = toml::from_str("type = \"geometric\"\nr = 0.5").unwrap();
        assert_eq!(Law::try_from(&spec).unwrap(), Law::Geometric { r: 0.5 });
        let bad: LawSpec = toml::from_str("type = \"geometric\"\nr = 1.5").unwrap();
        assert!(Law::try_from(&bad).is_err());
    }

    #[test]
    fn product_law_has_components() {
        let law = Law::Product(vec![Law::Uniform, Law::Geometric { r: 0.5 }]);
        let s = DrivingStream::new(1, law);
        match s.sample_at(1).unwrap() {
            Symbol::Tuple(parts) => assert_eq!(parts.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
