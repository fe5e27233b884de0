//! Nearest-neighbour contact processes viewed from the right endpoint.
//!
//! Descendant sets are subsets of `{-1, +1}`. The descendants of a site at
//! distance `2j` to the left of the current right endpoint are drawn from
//! the random words keyed by `(n + 1, j)`, so every process built on the same
//! [`ContactDriving`] shares randomness site-for-site once right endpoints
//! coincide.

pub mod three;
pub mod two;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{hash_key, unit_f64, BernoulliDigits};

pub use three::LatticeConfig3;
pub use two::LatticeConfig2;

/// Errors raised by contact-process runs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContactError {
    #[error("descendant probabilities must be nonnegative and sum to 1, got {0:?}")]
    Law([f64; 4]),
    #[error("infection probability q = {0} is outside [0, 1]")]
    Q(f64),
    #[error("width cap {cap} is below twice the probe horizon {horizon}")]
    WidthCap { cap: usize, horizon: u64 },
    #[error("the Z_- started process died at time {0}; enlarge its initial window")]
    WindowDied(u64),
    #[error("need at least {need} cycles, got {got}")]
    TooFewCycles { need: usize, got: usize },
}

/// Joint law of a descendant set `η ⊆ {-1, +1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescendantLaw {
    pub p_none: f64,
    pub p_left: f64,
    pub p_right: f64,
    pub p_both: f64,
}

impl DescendantLaw {
    /// `-1` and `+1` present independently, each with probability `b`.
    pub fn independent(b: f64) -> Self {
        Self { p_none: (1.0 - b) * (1.0 - b), p_left: b * (1.0 - b), p_right: (1.0 - b) * b, p_both: b * b }
    }

    /// Validate the four probabilities.
    pub fn validate(&self) -> Result<(), ContactError> {
        let p = [self.p_none, self.p_left, self.p_right, self.p_both];
        let total: f64 = p.iter().sum();
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(ContactError::Law(p));
        }
        Ok(())
    }

    /// `P(-1 ∈ η)`.
    pub fn left_marginal(&self) -> f64 {
        self.p_left + self.p_both
    }

    /// `P(+1 ∈ η)`.
    pub fn right_marginal(&self) -> f64 {
        self.p_right + self.p_both
    }
}

const LANE_LEFT: u64 = 0x4C45_4654;
const LANE_RIGHT_GIVEN_LEFT: u64 = 0x5247_4C31;
const LANE_RIGHT_GIVEN_NONE: u64 = 0x5247_4C30;
const LANE_IMMUNE: u64 = 0x494D_4D55;
const LANE_ABSOLUTE: u64 = 0x4142_534F;

/// The driving sequence of the contact processes: per step, descendant sets
/// `ξ'_{n+1,z}` and infection indicators `I_{n+1,z}` for even `z ≤ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactDriving {
    pub seed: u64,
    pub law: DescendantLaw,
    pub q: f64,
    left: BernoulliDigits,
    right_given_left: BernoulliDigits,
    right_given_none: BernoulliDigits,
    immune: BernoulliDigits,
}

impl ContactDriving {
    /// Build a driving with descendant law `law` and infection probability `q`.
    pub fn new(seed: u64, law: DescendantLaw, q: f64) -> Result<Self, ContactError> {
        law.validate()?;
        if !(0.0..=1.0).contains(&q) {
            return Err(ContactError::Q(q));
        }
        let lm = law.left_marginal();
        let r1 = if lm > 0.0 { law.p_both / lm } else { 0.0 };
        let r0 = if lm < 1.0 { law.p_right / (1.0 - lm) } else { 0.0 };
        Ok(Self {
            seed,
            law,
            q,
            left: BernoulliDigits::new(lm),
            right_given_left: BernoulliDigits::new(r1),
            right_given_none: BernoulliDigits::new(r0),
            immune: BernoulliDigits::new(q),
        })
    }

    /// Independent nearest-neighbour descendants with probability `b` each.
    pub fn nearest_neighbour(seed: u64, b: f64, q: f64) -> Result<Self, ContactError> {
        Self::new(seed, DescendantLaw::independent(b), q)
    }

    /// The same law with another seed.
    pub fn reseed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Left and right descendant bits for `j = 64 word .. 64 word + 63` at step `step`.
    #[inline]
    pub fn lr_words(&self, step: u64, word: u64) -> (u64, u64) {
        let l = self.left.draw_keyed(self.seed, LANE_LEFT, step as i64, word);
        let r1 = self.right_given_left.draw_keyed(self.seed, LANE_RIGHT_GIVEN_LEFT, step as i64, word);
        let r = if self.right_given_left.prob() == self.right_given_none.prob() {
            r1
        } else {
            let r0 = self.right_given_none.draw_keyed(self.seed, LANE_RIGHT_GIVEN_NONE, step as i64, word);
            (l & r1) | (!l & r0)
        };
        (l, r)
    }

    /// Infection indicators for `j = 64 word .. 64 word + 63` at step `step`.
    #[inline]
    pub fn i_word(&self, step: u64, word: u64) -> u64 {
        self.immune.draw_keyed(self.seed, LANE_IMMUNE, step as i64, word)
    }

    /// Descendant bits `(left, right)` of relative index `j` at step `step`.
    pub fn lr_bit(&self, step: u64, j: u64) -> (bool, bool) {
        let (l, r) = self.lr_words(step, j / 64);
        ((l >> (j % 64)) & 1 == 1, (r >> (j % 64)) & 1 == 1)
    }

    /// Infection indicator of relative index `j` at step `step`.
    pub fn i_bit(&self, step: u64, j: u64) -> bool {
        (self.i_word(step, j / 64) >> (j % 64)) & 1 == 1
    }

    /// Descendant bits keyed by absolute site instead of relative index.
    pub fn lr_absolute(&self, step: u64, site: i64) -> (bool, bool) {
        let u = unit_f64(hash_key(self.seed, LANE_ABSOLUTE, site, step));
        let p = &self.law;
        if u < p.p_none {
            (false, false)
        } else if u < p.p_none + p.p_left {
            (true, false)
        } else if u < p.p_none + p.p_left + p.p_right {
            (false, true)
        } else {
            (true, true)
        }
    }
}

/// A growable little-endian bit vector.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bits {
    pub words: Vec<u64>,
}

impl Bits {
    /// A vector with only bit 0 set.
    pub fn unit() -> Self {
        Self { words: vec![1] }
    }

    /// Bit `i`.
    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.words.get(i / 64).is_some_and(|w| (w >> (i % 64)) & 1 == 1)
    }

    /// Set bit `i` to `v`, growing as needed.
    pub fn set(&mut self, i: usize, v: bool) {
        if self.words.len() <= i / 64 {
            self.words.resize(i / 64 + 1, 0);
        }
        if v {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Index of the lowest set bit.
    #[inline]
    pub fn lowest(&self) -> Option<usize> {
        self.words.iter().position(|w| *w != 0).map(|i| i * 64 + self.words[i].trailing_zeros() as usize)
    }

    /// Index of the highest set bit.
    pub fn highest(&self) -> Option<usize> {
        self.words.iter().rposition(|w| *w != 0).map(|i| i * 64 + 63 - self.words[i].leading_zeros() as usize)
    }

    /// True when no bit is set.
    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    /// Number of set bits.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Move bit `i` to `i - k`, dropping bits below `k`.
    pub fn shift_down(&mut self, k: usize) {
        let (ws, bs) = (k / 64, k % 64);
        let n = self.words.len();
        for i in 0..n {
            let lo = self.words.get(i + ws).copied().unwrap_or(0);
            let hi = self.words.get(i + ws + 1).copied().unwrap_or(0);
            self.words[i] = if bs == 0 { lo } else { (lo >> bs) | (hi << (64 - bs)) };
        }
        self.trim();
    }

    /// Move bit `i` to `i + k`.
    pub fn shift_up(&mut self, k: usize) {
        if self.words.is_empty() {
            return;
        }
        let (ws, bs) = (k / 64, k % 64);
        let n = self.words.len();
        self.words.resize(n + ws + 1, 0);
        for i in (0..n + ws + 1).rev() {
            let src = i as isize - ws as isize;
            let lo = if src >= 0 && (src as usize) < n { self.words[src as usize] } else { 0 };
            let below = if src >= 1 && ((src - 1) as usize) < n { self.words[(src - 1) as usize] } else { 0 };
            self.words[i] = if bs == 0 { lo } else { (lo << bs) | (below >> (64 - bs)) };
        }
        self.trim();
    }

    /// Drop trailing zero words.
    pub fn trim(&mut self) {
        while self.words.last() == Some(&0) {
            self.words.pop();
        }
    }

    /// Clear every bit at index `len` or above.
    pub fn truncate(&mut self, len: usize) {
        let full = len / 64;
        if self.words.len() > full {
            let rem = len % 64;
            self.words.truncate(full + usize::from(rem > 0));
            if rem > 0 {
                self.words[full] &= (1u64 << rem) - 1;
            }
        }
        self.trim();
    }

    /// Bitwise `self & other`.
    pub fn and(&self, other: &Bits) -> Bits {
        let mut b = Bits { words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect() };
        b.trim();
        b
    }

    /// Bitwise `self | other`.
    pub fn or(&self, other: &Bits) -> Bits {
        let (long, short) = if self.words.len() >= other.words.len() { (self, other) } else { (other, self) };
        let mut words = long.words.clone();
        for (w, s) in words.iter_mut().zip(&short.words) {
            *w |= s;
        }
        Bits { words }
    }

    /// Bitwise `self & !other`.
    pub fn and_not(&self, other: &Bits) -> Bits {
        let mut words = self.words.clone();
        for (w, o) in words.iter_mut().zip(&other.words) {
            *w &= !o;
        }
        let mut b = Bits { words };
        b.trim();
        b
    }

    /// Place the bits of the `j`-indexed words `js` at positions `offset + 2j`.
    pub fn spread_from(js: &[u64], offset: usize) -> Bits {
        let mut words = Vec::with_capacity(2 * js.len() + 1);
        for &w in js {
            words.push(spread_even(w as u32));
            words.push(spread_even((w >> 32) as u32));
        }
        let mut b = Bits { words };
        b.trim();
        b.shift_up(offset);
        b
    }

    /// Number of bits spanned by the stored words.
    pub fn capacity_bits(&self) -> usize {
        self.words.len() * 64
    }
}

/// Spread the 32 bits of `x` to the even positions of a 64-bit word.
#[inline]
pub fn spread_even(x: u32) -> u64 {
    let mut v = x as u64;
    v = (v | (v << 16)) & 0x0000_FFFF_0000_FFFF;
    v = (v | (v << 8)) & 0x00FF_00FF_00FF_00FF;
    v = (v | (v << 4)) & 0x0F0F_0F0F_0F0F_0F0F;
    v = (v | (v << 2)) & 0x3333_3333_3333_3333;
    (v | (v << 1)) & 0x5555_5555_5555_5555
}

/// Survival-probe fractions at nested horizons and their extrapolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub horizons: Vec<u64>,
    /// Fraction of probes still alive at each horizon.
    pub fractions: Vec<f64>,
    pub probes: usize,
    /// Aitken-extrapolated limit of the last three fractions.
    pub p_hat: f64,
    pub std_error: f64,
    /// Whether successive changes shrink.
    pub shrinking: bool,
    /// Extinction times of probes that died.
    pub extinction_times: Vec<u64>,
}

/// Aitken's extrapolation of three successive values, falling back to the last one.
pub fn aitken(a: f64, b: f64, c: f64) -> f64 {
    let den = a - 2.0 * b + c;
    if den.abs() < 1e-15 {
        c
    } else {
        let v = c - (c - b) * (c - b) / den;
        if v.is_finite() && v <= c && v >= 0.0 {
            v
        } else {
            c
        }
    }
}

/// Build a survival estimate from per-probe extinction times (`None` = alive
/// at the largest horizon).
pub fn survival_estimate(horizons: &[u64], deaths: &[Option<u64>]) -> SurvivalEstimate {
    let probes = deaths.len();
    let fractions: Vec<f64> = horizons
        .iter()
        .map(|&h| deaths.iter().filter(|d| d.is_none_or(|t| t > h)).count() as f64 / probes.max(1) as f64)
        .collect();
    let k = fractions.len();
    let p_hat = if k >= 3 { aitken(fractions[k - 3], fractions[k - 2], fractions[k - 1]) } else { fractions[k - 1] };
    let shrinking = fractions.windows(3).all(|w| (w[1] - w[2]).abs() <= (w[0] - w[1]).abs());
    let last = fractions[k - 1];
    SurvivalEstimate {
        horizons: horizons.to_vec(),
        fractions,
        probes,
        p_hat,
        std_error: (last * (1.0 - last) / probes.max(1) as f64).sqrt(),
        shrinking,
        extinction_times: deaths.iter().flatten().copied().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_places_bits_on_even_positions() {
        assert_eq!(spread_even(0b1011), 0b1000101);
        assert_eq!(spread_even(u32::MAX), 0x5555_5555_5555_5555);
    }

    #[test]
    fn shifts_round_trip() {
        let mut b = Bits { words: vec![0x8000_0000_0000_0001, 0x3] };
        let orig = b.clone();
        b.shift_up(70);
        assert!(b.get(70) && b.get(133) && b.get(134) && b.get(135));
        b.shift_down(70);
        assert_eq!(b, orig);
        b.shift_down(64);
        assert_eq!(b.words, vec![3]);
    }

    #[test]
    fn descendant_marginals() {
        let d = ContactDriving::nearest_neighbour(5, 0.75, 0.5).unwrap();
        let mut ones = [0u32; 2];
        for w in 0..2_000 {
            let (l, r) = d.lr_words(1, w);
            ones[0] += l.count_ones();
            ones[1] += r.count_ones();
        }
        for c in ones {
            assert!((c as f64 / 128_000.0 - 0.75).abs() < 0.01);
        }
    }

    #[test]
    fn dependent_law_matches_joint() {
        let law = DescendantLaw { p_none: 0.1, p_left: 0.2, p_right: 0.3, p_both: 0.4 };
        let d = ContactDriving::new(11, law, 0.5).unwrap();
        let mut counts = [0u32; 4];
        for w in 0..4_000 {
            let (l, r) = d.lr_words(3, w);
            for k in 0..64 {
                let idx = (((l >> k) & 1) << 1 | ((r >> k) & 1)) as usize;
                counts[idx] += 1;
            }
        }
        let total = 256_000.0;
        let expect = [0.1, 0.3, 0.2, 0.4];
        for (c, e) in counts.iter().zip(expect) {
            assert!((*c as f64 / total - e).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn invalid_law_is_rejected() {
        let law = DescendantLaw { p_none: 0.5, p_left: 0.5, p_right: 0.5, p_both: 0.0 };
        assert!(ContactDriving::new(1, law, 0.5).is_err());
        assert!(ContactDriving::nearest_neighbour(1, 0.5, 1.5).is_err());
    }
}
