//! Validated domain types shared by every other module: stochastic vectors,
//! periodic base patterns with exact frequency bookkeeping, and row-stochastic
//! digit-distribution matrices.
//!
//! All three types are immutable after construction, so they can be shared
//! freely across threads. Construction never renormalizes its input: a vector
//! whose entries do not already sum to 1 is rejected, because silently fixing
//! the sum would change the mathematical problem being solved.

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact rational used for pattern-derived base frequencies.
pub type Rational = Ratio<u64>;

/// Absolute tolerance on probability sums accepted by [`StochasticVector::validate`].
pub const SUM_TOL: f64 = 1e-12;

/// Absolute tolerance on row sums of a [`FrequencyMatrix`].
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Largest common denominator accepted by [`BasePattern::from_frequencies`].
pub const MAX_PATTERN_DENOMINATOR: u64 = 1_000_000;

/// Absolute tolerance for recognising an `f64` as an exact small rational.
///
/// Any ratio p/q with q below [`MAX_PATTERN_DENOMINATOR`] is represented by
/// its nearest `f64` with error below `eps/2 <= 1.2e-16`, so `1e-15` accepts
/// every genuine rational while rejecting irrational inputs, whose best
/// approximations with denominator <= 10^6 stay several orders above it.
pub const RATIONAL_RECOVERY_TOL: f64 = 1e-15;

/// A finitely supported probability vector indexed by nonnegative integers.
///
/// Entries are stored sparsely: an absent index means an exact zero. The two
/// roles this type plays are a digit-frequency vector (indices are digits)
/// and a base-frequency vector (indices are bases, which must be >= 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<u32, f64>")]
#[serde(into = "BTreeMap<u32, f64>")]
pub struct StochasticVector {
    entries: BTreeMap<u32, f64>,
}

impl StochasticVector {
    /// Checks `raw` for the stochastic-vector invariants and returns the
    /// validated vector. Entries must be nonnegative and sum to 1 within
    /// `tol`; exact zeros are dropped so that support queries stay cheap.
    pub fn validate(raw: BTreeMap<u32, f64>, tol: f64) -> Result<Self> {
        for (&index, &value) in &raw {
            if value < 0.0 || value.is_nan() {
                return Err(Error::NegativeEntry { index, value });
            }
        }
        let sum = kahan_sum(raw.values().copied());
        if (sum - 1.0).abs() > tol {
            return Err(Error::SumNotOne { actual: sum, tol });
        }
        let entries: BTreeMap<u32, f64> =
            raw.into_iter().filter(|&(_, value)| value > 0.0).collect();
        if entries.is_empty() {
            return Err(Error::EmptySupport);
        }
        Ok(Self { entries })
    }

    /// Validates with the default tolerance [`SUM_TOL`].
    pub fn new(raw: BTreeMap<u32, f64>) -> Result<Self> {
        Self::validate(raw, SUM_TOL)
    }

    /// Builds a vector from a dense slice starting at index 0.
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .enumerate()
                .map(|(index, &value)| (index as u32, value))
                .collect(),
        )
    }

    /// The vector with all mass at a single index.
    pub fn point_mass(index: u32) -> Self {
        Self {
            entries: BTreeMap::from([(index, 1.0)]),
        }
    }

    /// Entry at `index`; absent indices are exact zeros.
    pub fn get(&self, index: u32) -> f64 {
        self.entries.get(&index).copied().unwrap_or(0.0)
    }

    /// Smallest index with positive mass.
    pub fn support_min(&self) -> u32 {
        *self.entries.keys().next().expect("support is never empty")
    }

    /// Largest index with positive mass.
    pub fn support_max(&self) -> u32 {
        *self
            .entries
            .keys()
            .next_back()
            .expect("support is never empty")
    }

    /// Iterates over (index, mass) pairs in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().map(|(&index, &value)| (index, value))
    }

    /// Total mass at indices `>= from`.
    pub fn tail_mass(&self, from: u32) -> f64 {
        kahan_sum(self.entries.range(from..).map(|(_, &value)| value))
    }

    /// Number of indices with positive mass.
    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    /// Read-only view of the underlying sparse map.
    pub fn as_map(&self) -> &BTreeMap<u32, f64> {
        &self.entries
    }
}

impl TryFrom<BTreeMap<u32, f64>> for StochasticVector {
    type Error = Error;

    fn try_from(raw: BTreeMap<u32, f64>) -> Result<Self> {
        Self::new(raw)
    }
}

impl From<StochasticVector> for BTreeMap<u32, f64> {
    fn from(vector: StochasticVector) -> Self {
        vector.entries
    }
}

/// One period of a periodic base sequence. Position `i` (1-based) of the
/// infinite sequence carries base `pattern[(i - 1) % period]`, so every base
/// value has an exact rational limiting frequency `count / period`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>")]
#[serde(into = "Vec<u32>")]
pub struct BasePattern {
    bases: Vec<u32>,
}

impl BasePattern {
    pub fn new(bases: Vec<u32>) -> Result<Self> {
        if bases.is_empty() {
            return Err(Error::EmptySupport);
        }
        if let Some(&bad) = bases.iter().find(|&&b| b < 2) {
            return Err(Error::InvalidBase(bad));
        }
        Ok(Self { bases })
    }

    /// Period length of the pattern.
    pub fn period(&self) -> usize {
        self.bases.len()
    }

    /// Base at 1-based position `i` of the infinite sequence.
    pub fn base_at(&self, position: usize) -> u32 {
        debug_assert!(position >= 1, "positions are 1-based");
        self.bases[(position - 1) % self.bases.len()]
    }

    /// The raw period as a slice.
    pub fn as_slice(&self) -> &[u32] {
        &self.bases
    }

    /// Exact limiting frequency of every base value, as `count / period`.
    /// The returned frequencies sum to exactly 1 in rational arithmetic.
    pub fn frequencies(&self) -> BTreeMap<u32, Rational> {
        let period = self.bases.len() as u64;
        let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
        for &base in &self.bases {
            *counts.entry(base).or_insert(0) += 1;
        }
        counts
            .into_iter()
            .map(|(base, count)| (base, Rational::new(count, period)))
            .collect()
    }

    /// The base frequencies as a validated [`StochasticVector`].
    pub fn frequency_vector(&self) -> StochasticVector {
        let raw: BTreeMap<u32, f64> = self
            .frequencies()
            .into_iter()
            .map(|(base, ratio)| (base, ratio.to_f64().expect("small rational")))
            .collect();
        StochasticVector::new(raw).expect("pattern frequencies always form a stochastic vector")
    }

    /// Count of each base value among the first `n` positions.
    pub fn base_counts(&self, n: usize) -> BTreeMap<u32, u64> {
        let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
        for position in 1..=n {
            *counts.entry(self.base_at(position)).or_insert(0) += 1;
        }
        counts
    }

    /// Builds a pattern whose limiting base frequencies equal `freqs` exactly.
    ///
    /// The pattern has length equal to the least common denominator `Q` of the
    /// frequencies and contains exactly `Q * freqs[k]` copies of base `k`,
    /// interleaved by a greedy highest-quota rule (ties go to the smallest
    /// base) so that every prefix count `D_k(n)` stays within the number of
    /// distinct bases of `n * freqs[k]`.
    pub fn from_frequencies(freqs: &BTreeMap<u32, Rational>, max_denominator: u64) -> Result<Self> {
        if freqs.is_empty() {
            return Err(Error::EmptySupport);
        }
        let mut total = Rational::zero();
        for (&base, &value) in freqs {
            if base < 2 && !value.is_zero() {
                return Err(Error::InvalidBase(base));
            }
            total += value;
        }
        if total != Rational::one() {
            return Err(Error::SumNotOne {
                actual: total.to_f64().unwrap_or(f64::NAN),
                tol: 0.0,
            });
        }

        let mut common: u64 = 1;
        for value in freqs.values() {
            common = lcm(common, *value.denom())
                .ok_or(Error::DenominatorTooLarge(u64::MAX, max_denominator))?;
            if common > max_denominator {
                return Err(Error::DenominatorTooLarge(common, max_denominator));
            }
        }

        let counts: BTreeMap<u32, u64> = freqs
            .iter()
            .filter(|(_, value)| !value.is_zero())
            .map(|(&base, value)| (base, common / value.denom() * value.numer()))
            .collect();

        // Highest-quota scheduling: at each position place the base with the
        // largest remaining per-slot share count / (placed + 1).
        let mut placed: BTreeMap<u32, u64> = counts.keys().map(|&base| (base, 0)).collect();
        let mut pattern = Vec::with_capacity(common as usize);
        for _ in 0..common {
            let mut best: Option<(u32, u64, u64)> = None;
            for (&base, &count) in &counts {
                let done = placed[&base];
                if done == count {
                    continue;
                }
                match best {
                    None => best = Some((base, count, done)),
                    Some((_, best_count, best_done)) => {
                        let lhs = u128::from(count) * u128::from(best_done + 1);
                        let rhs = u128::from(best_count) * u128::from(done + 1);
                        if lhs > rhs {
                            best = Some((base, count, done));
                        }
                    }
                }
            }
            let (base, _, _) = best.expect("counts sum to the pattern length");
            *placed.get_mut(&base).expect("initialised above") += 1;
            pattern.push(base);
        }
        Self::new(pattern)
    }

    /// Like [`BasePattern::from_frequencies`], starting from an `f64`-valued
    /// vector whose entries must be recognisable as exact small rationals.
    pub fn from_frequency_vector(d: &StochasticVector, max_denominator: u64) -> Result<Self> {
        let mut freqs = BTreeMap::new();
        for (base, value) in d.iter() {
            freqs.insert(base, rational_from_f64(value, base, max_denominator)?);
        }
        Self::from_frequencies(&freqs, max_denominator)
    }
}

impl TryFrom<Vec<u32>> for BasePattern {
    type Error = Error;

    fn try_from(bases: Vec<u32>) -> Result<Self> {
        Self::new(bases)
    }
}

impl From<BasePattern> for Vec<u32> {
    fn from(pattern: BasePattern) -> Self {
        pattern.bases
    }
}

/// A row-stochastic digit-distribution matrix. Row `n` (a base value, so
/// `n >= 2`) holds the probabilities of digits `0..n`; digits `>= n` are
/// impossible in base `n` and have no storage at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<u32, Vec<f64>>")]
#[serde(into = "BTreeMap<u32, Vec<f64>>")]
pub struct FrequencyMatrix {
    rows: BTreeMap<u32, Vec<f64>>,
}

impl FrequencyMatrix {
    pub fn new(rows: BTreeMap<u32, Vec<f64>>) -> Result<Self> {
        for (&base, row) in &rows {
            if base < 2 {
                return Err(Error::InvalidBase(base));
            }
            if row.len() != base as usize {
                return Err(Error::RowLengthMismatch {
                    base,
                    len: row.len(),
                });
            }
            for (digit, &value) in row.iter().enumerate() {
                if value < 0.0 || value.is_nan() {
                    return Err(Error::NegativeEntry {
                        index: digit as u32,
                        value,
                    });
                }
            }
            let sum = kahan_sum(row.iter().copied());
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::SumNotOne {
                    actual: sum,
                    tol: ROW_SUM_TOL,
                });
            }
        }
        Ok(Self { rows })
    }

    /// The matrix with uniform rows `1/n` for every base in `bases`.
    pub fn uniform(bases: impl IntoIterator<Item = u32>) -> Result<Self> {
        let rows = bases
            .into_iter()
            .map(|base| (base, vec![1.0 / f64::from(base); base as usize]))
            .collect();
        Self::new(rows)
    }

    pub fn row(&self, base: u32) -> Option<&[f64]> {
        self.rows.get(&base).map(Vec::as_slice)
    }

    /// Entry `(base, digit)`, or `None` when the row is absent.
    pub fn get(&self, base: u32, digit: u32) -> Option<f64> {
        self.rows
            .get(&base)
            .and_then(|row| row.get(digit as usize).copied())
    }

    pub fn bases(&self) -> impl Iterator<Item = u32> + '_ {
        self.rows.keys().copied()
    }

    pub fn rows(&self) -> impl Iterator<Item = (u32, &[f64])> + '_ {
        self.rows.iter().map(|(&base, row)| (base, row.as_slice()))
    }

    pub fn as_map(&self) -> &BTreeMap<u32, Vec<f64>> {
        &self.rows
    }
}

impl TryFrom<BTreeMap<u32, Vec<f64>>> for FrequencyMatrix {
    type Error = Error;

    fn try_from(rows: BTreeMap<u32, Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<FrequencyMatrix> for BTreeMap<u32, Vec<f64>> {
    fn from(matrix: FrequencyMatrix) -> Self {
        matrix.rows
    }
}

/// Recovers the exact rational a float was rounded from, by scanning the
/// continued-fraction convergents of `value` up to `max_denominator`.
pub fn rational_from_f64(value: f64, index: u32, max_denominator: u64) -> Result<Rational> {
    let fail = || Error::IrrationalFrequency {
        index,
        value,
        max_denominator,
    };
    if !(0.0..=1.0).contains(&value) {
        return Err(fail());
    }
    if value == 0.0 {
        return Ok(Rational::zero());
    }
    if value == 1.0 {
        return Ok(Rational::one());
    }

    // Convergents p_k/q_k of the continued fraction of `value`, with the
    // standard seeds p_{-2}/q_{-2} = 0/1, p_{-1}/q_{-1} = 1/0.
    let (mut p_old, mut q_old) = (0u64, 1u64);
    let (mut p_cur, mut q_cur) = (1u64, 0u64);
    let mut x = value;
    for _ in 0..64 {
        let a = x.floor();
        if a < 0.0 || a > u64::MAX as f64 {
            break;
        }
        let a = a as u64;
        let p_next = match a.checked_mul(p_cur).and_then(|v| v.checked_add(p_old)) {
            Some(v) => v,
            None => break,
        };
        let q_next = match a.checked_mul(q_cur).and_then(|v| v.checked_add(q_old)) {
            Some(v) => v,
            None => break,
        };
        if q_next > max_denominator {
            break;
        }
        (p_old, q_old) = (p_cur, q_cur);
        (p_cur, q_cur) = (p_next, q_next);
        let approx = p_cur as f64 / q_cur as f64;
        if q_cur > 0 && (approx - value).abs() <= RATIONAL_RECOVERY_TOL {
            return Ok(Rational::new(p_cur, q_cur));
        }
        let frac = x - a as f64;
        if frac.abs() < f64::EPSILON {
            break;
        }
        x = 1.0 / frac;
    }
    Err(fail())
}

fn lcm(a: u64, b: u64) -> Option<u64> {
    let g = gcd(a, b);
    (a / g).checked_mul(b)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Compensated (Kahan) summation, so long vectors keep full f64 accuracy.
pub(crate) fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for value in values {
        let y = value - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}
