//! Cantor series expansions over a periodic base sequence.
//!
//! With bases `b_1, b_2, ...` every `x` in `[0, 1)` has an expansion
//!
//! ```text
//! x = sum_{i >= 1} digit_i / (b_1 * b_2 * ... * b_i),   0 <= digit_i < b_i,
//! ```
//!
//! unique except for a countable set of points with two representations;
//! those get the greedy (floor) expansion here, which makes [`expand`] a
//! total deterministic function on `[0, 1)`. Digit extraction runs on exact
//! integer arithmetic (the input is a dyadic or explicit rational), so there
//! is no floating-point drift at any depth.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::BasePattern;

/// Depth up to which [`cylinder`] reports exact rational endpoints. Beyond
/// it only the logarithmic length is returned; every downstream use of deep
/// cylinders works on logarithms anyway.
pub const EXACT_CYLINDER_DEPTH_LIMIT: usize = 64;

/// A finite digit string together with the base pattern generating its
/// positions. Digit `i` (1-based) satisfies `digit < base_at(i)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DigitString {
    digits: Vec<u32>,
    pattern: BasePattern,
}

impl DigitString {
    pub fn new(digits: Vec<u32>, pattern: BasePattern) -> Result<Self> {
        for (offset, &digit) in digits.iter().enumerate() {
            let base = pattern.base_at(offset + 1);
            if digit >= base {
                return Err(Error::DigitOutOfRange {
                    position: offset + 1,
                    digit,
                    base,
                });
            }
        }
        Ok(Self { digits, pattern })
    }

    pub fn depth(&self) -> usize {
        self.digits.len()
    }

    pub fn digits(&self) -> &[u32] {
        &self.digits
    }

    pub fn pattern(&self) -> &BasePattern {
        &self.pattern
    }

    /// Base at 1-based position `i`.
    pub fn base_at(&self, position: usize) -> u32 {
        self.pattern.base_at(position)
    }

    /// Extends the string by one digit, validating it against the next base.
    pub fn child(&self, digit: u32) -> Result<Self> {
        let mut digits = self.digits.clone();
        digits.push(digit);
        Self::new(digits, self.pattern.clone())
    }
}

/// Greedy digit extraction: the unique string with
/// `x - value(digits) in [0, 1 / (b_1 ... b_n))`.
///
/// The float input is treated as the exact dyadic rational it is, so the
/// digits are those of that rational, computed without rounding.
pub fn expand(x: f64, pattern: &BasePattern, depth: usize) -> Result<DigitString> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::OutOfRange(x));
    }
    let exact = BigRational::from_float(x).expect("finite after the range check");
    expand_rational(&exact, pattern, depth)
}

/// [`expand`] for an exact rational input in `[0, 1)`.
pub fn expand_rational(x: &BigRational, pattern: &BasePattern, depth: usize) -> Result<DigitString> {
    if x.is_negative() || *x >= BigRational::one() {
        return Err(Error::OutOfRange(x.to_f64().unwrap_or(f64::NAN)));
    }
    let denom = x.denom().to_biguint().expect("denominator is positive");
    let mut numer = x.numer().to_biguint().expect("nonnegative after range check");
    let mut digits = Vec::with_capacity(depth);
    for position in 1..=depth {
        let base = pattern.base_at(position);
        numer *= base;
        let digit = (&numer / &denom).to_u32().expect("digit is below its base");
        numer -= BigUint::from(digit) * &denom;
        digits.push(digit);
    }
    Ok(DigitString {
        digits,
        pattern: pattern.clone(),
    })
}

/// Value of the finite expansion, by backward (Horner) accumulation:
/// `(((digit_n / b_n) + digit_{n-1}) / b_{n-1} + ...) / b_1`.
pub fn evaluate(s: &DigitString) -> f64 {
    let mut acc = 0.0;
    for position in (1..=s.depth()).rev() {
        acc = (f64::from(s.digits[position - 1]) + acc) / f64::from(s.base_at(position));
    }
    acc
}

/// Exact rational value of the finite expansion, accumulated as a single
/// fraction: the numerator is the integer Horner form
/// `((digit_1 * b_2 + digit_2) * b_3 + ...)` over the base product.
pub fn evaluate_exact(s: &DigitString) -> BigRational {
    let (numer, denom) = integer_form(s);
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}

/// `(N, P)` with `value = N / P`, `P` the product of the first `depth` bases.
fn integer_form(s: &DigitString) -> (BigUint, BigUint) {
    let mut numer = BigUint::zero();
    let mut denom = BigUint::one();
    for (offset, &digit) in s.digits.iter().enumerate() {
        let base = s.base_at(offset + 1);
        numer = numer * base + digit;
        denom *= base;
    }
    (numer, denom)
}

/// The half-open interval of all reals sharing a digit prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Cylinder {
    /// Natural logarithm of the interval length, `-sum_i log b_i`.
    pub log_length: f64,
    /// Exact endpoints, available for depths up to
    /// [`EXACT_CYLINDER_DEPTH_LIMIT`]; the base product overflows fixed-width
    /// integers soon after and is only of logarithmic interest there.
    pub exact: Option<ExactInterval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactInterval {
    pub lower: BigRational,
    pub upper: BigRational,
}

impl ExactInterval {
    pub fn length(&self) -> BigRational {
        &self.upper - &self.lower
    }
}

/// Cylinder interval `[value(digits), value(digits) + 1/(b_1 ... b_n))` of a
/// digit prefix. The depth-0 prefix yields the whole space `[0, 1)`.
pub fn cylinder(s: &DigitString) -> Cylinder {
    let log_length = -(1..=s.depth())
        .map(|position| f64::from(s.base_at(position)).ln())
        .sum::<f64>();
    let exact = (s.depth() <= EXACT_CYLINDER_DEPTH_LIMIT).then(|| {
        let (numer, denom) = integer_form(s);
        ExactInterval {
            lower: BigRational::new(BigInt::from(numer.clone()), BigInt::from(denom.clone())),
            upper: BigRational::new(BigInt::from(numer + 1u32), BigInt::from(denom)),
        }
    });
    Cylinder { log_length, exact }
}

/// Exact occurrence counts of digits, bases, and (base, digit) pairs within
/// a digit string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrequencyStats {
    /// Depth of the counted prefix.
    pub depth: u64,
    /// Count of positions whose digit equals `j`, per digit `j`.
    pub digit_counts: BTreeMap<u32, u64>,
    /// Count of positions with base `k` and digit `j`, as `base -> digit -> count`.
    pub joint_counts: BTreeMap<u32, BTreeMap<u32, u64>>,
    /// Count of positions whose base equals `k`, per base `k`.
    pub base_counts: BTreeMap<u32, u64>,
}

/// Tallies all frequency statistics of a digit string in one pass.
pub fn digit_stats(s: &DigitString) -> FrequencyStats {
    let mut digit_counts: BTreeMap<u32, u64> = BTreeMap::new();
    let mut joint_counts: BTreeMap<u32, BTreeMap<u32, u64>> = BTreeMap::new();
    let mut base_counts: BTreeMap<u32, u64> = BTreeMap::new();
    for (offset, &digit) in s.digits.iter().enumerate() {
        let base = s.base_at(offset + 1);
        *digit_counts.entry(digit).or_insert(0) += 1;
        *joint_counts
            .entry(base)
            .or_default()
            .entry(digit)
            .or_insert(0) += 1;
        *base_counts.entry(base).or_insert(0) += 1;
    }
    FrequencyStats {
        depth: s.depth() as u64,
        digit_counts,
        joint_counts,
        base_counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pattern(bases: &[u32]) -> BasePattern {
        BasePattern::new(bases.to_vec()).unwrap()
    }

    fn rational(numer: i64, denom: i64) -> BigRational {
        BigRational::new(BigInt::from(numer), BigInt::from(denom))
    }

    #[test]
    fn zero_expands_to_zeros() {
        let s = expand(0.0, &pattern(&[2, 3]), 5).unwrap();
        assert_eq!(s.digits(), &[0, 0, 0, 0, 0]);
    }

    #[test]
    fn five_sixths_over_alternating_bases() {
        // Greedy run: 5/6 = 1/2 + 2/(2*3), then zeros.
        let s = expand(5.0 / 6.0, &pattern(&[2, 3]), 4).unwrap();
        assert_eq!(s.digits(), &[1, 2, 0, 0]);
        // Re-verified through the inverse direction.
        assert_eq!(evaluate_exact(&s), rational(5, 6));
        assert!((evaluate(&s) - 5.0 / 6.0).abs() < 1e-15);

        let exact = expand_rational(&rational(5, 6), &pattern(&[2, 3]), 4).unwrap();
        assert_eq!(exact.digits(), &[1, 2, 0, 0]);
    }

    #[test]
    fn dyadic_boundary_takes_greedy_branch() {
        let s = expand(0.5, &pattern(&[2]), 3).unwrap();
        assert_eq!(s.digits(), &[1, 0, 0]);
    }

    #[test]
    fn out_of_range_inputs_are_rejected() {
        assert!(matches!(
            expand(1.0, &pattern(&[2]), 1),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            expand(-0.25, &pattern(&[2]), 1),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            expand(f64::NAN, &pattern(&[2]), 1),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn two_term_partial_sum_is_exact() {
        let s = DigitString::new(vec![1, 2], pattern(&[2, 3])).unwrap();
        assert_eq!(evaluate_exact(&s), rational(5, 6));
    }

    #[test]
    fn digit_bounds_are_enforced() {
        assert!(matches!(
            DigitString::new(vec![0, 3], pattern(&[2, 3])),
            Err(Error::DigitOutOfRange {
                position: 2,
                digit: 3,
                base: 3
            })
        ));
    }

    #[test]
    fn cylinder_of_single_digit() {
        let s = DigitString::new(vec![1], pattern(&[2])).unwrap();
        let cyl = cylinder(&s);
        let exact = cyl.exact.unwrap();
        assert_eq!(exact.lower, rational(1, 2));
        assert_eq!(exact.upper, rational(1, 1));
        assert_eq!(exact.length(), rational(1, 2));
        assert!((cyl.log_length - (0.5f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn cylinder_of_two_digits() {
        let s = DigitString::new(vec![0, 2], pattern(&[2, 3])).unwrap();
        let exact = cylinder(&s).exact.unwrap();
        assert_eq!(exact.lower, rational(1, 3));
        assert_eq!(exact.upper, rational(1, 2));
        assert_eq!(exact.length(), rational(1, 6));
    }

    #[test]
    fn depth_zero_cylinder_is_whole_space() {
        let s = DigitString::new(vec![], pattern(&[2])).unwrap();
        let cyl = cylinder(&s);
        assert_eq!(cyl.log_length, 0.0);
        let exact = cyl.exact.unwrap();
        assert_eq!(exact.lower, BigRational::zero());
        assert_eq!(exact.upper, BigRational::one());
    }

    #[test]
    fn deep_cylinders_report_log_length_only() {
        let s = expand(0.37, &pattern(&[2, 3]), 80).unwrap();
        let cyl = cylinder(&s);
        assert!(cyl.exact.is_none());
        let expected = -(0..80)
            .map(|i| f64::from([2.0f64, 3.0][i % 2] as u32).ln())
            .sum::<f64>();
        assert!((cyl.log_length - expected).abs() < 1e-12);
    }

    #[test]
    fn stats_of_mixed_string() {
        let s = DigitString::new(vec![1, 2, 0], pattern(&[2, 3, 2])).unwrap();
        let stats = digit_stats(&s);
        assert_eq!(stats.digit_counts[&0], 1);
        assert_eq!(stats.digit_counts[&1], 1);
        assert_eq!(stats.digit_counts[&2], 1);
        assert_eq!(stats.base_counts[&2], 2);
        assert_eq!(stats.base_counts[&3], 1);
        assert_eq!(stats.joint_counts[&3][&2], 1);
        assert_eq!(stats.joint_counts[&2][&1], 1);
        assert_eq!(stats.joint_counts[&2][&0], 1);
    }

    #[test]
    fn stats_of_all_zero_string() {
        let s = DigitString::new(vec![0; 9], pattern(&[2, 2, 3])).unwrap();
        let stats = digit_stats(&s);
        assert_eq!(stats.digit_counts[&0], 9);
        assert_eq!(stats.base_counts[&2], 6);
        assert_eq!(stats.base_counts[&3], 3);
    }

    #[test]
    fn children_partition_parent_exactly() {
        let pat = pattern(&[2, 3, 4]);
        let parent = expand(0.613, &pat, 5).unwrap();
        let parent_cyl = cylinder(&parent).exact.unwrap();
        let next_base = parent.base_at(6);
        let mut walker = parent_cyl.lower.clone();
        for digit in 0..next_base {
            let child = cylinder(&parent.child(digit).unwrap()).exact.unwrap();
            assert_eq!(child.lower, walker, "children must tile left to right");
            walker = child.upper;
        }
        assert_eq!(walker, parent_cyl.upper);
    }

    proptest! {
        /// Round trip: the evaluation error of a truncated expansion stays
        /// inside the final cylinder, checked in exact arithmetic.
        #[test]
        fn expand_evaluate_round_trip(
            x in 0.0f64..1.0,
            bases in proptest::collection::vec(2u32..7, 1..5),
            depth in 1usize..40,
        ) {
            let pat = BasePattern::new(bases).unwrap();
            let s = expand(x, &pat, depth).unwrap();
            let exact_x = BigRational::from_float(x).unwrap();
            let value = evaluate_exact(&s);
            let gap = &exact_x - &value;
            prop_assert!(gap >= BigRational::zero());
            prop_assert!(gap < cylinder(&s).exact.unwrap().length());
        }

        /// Counting identities: digit counts partition the depth, joint
        /// counts refine digit counts, and a digit seen under base k needs a
        /// base-k position.
        #[test]
        fn stats_identities(
            x in 0.0f64..1.0,
            bases in proptest::collection::vec(2u32..6, 1..4),
            depth in 1usize..60,
        ) {
            let pat = BasePattern::new(bases).unwrap();
            let s = expand(x, &pat, depth).unwrap();
            let stats = digit_stats(&s);
            let digit_total: u64 = stats.digit_counts.values().sum();
            prop_assert_eq!(digit_total, depth as u64);
            let base_total: u64 = stats.base_counts.values().sum();
            prop_assert_eq!(base_total, depth as u64);
            for (&digit, &count) in &stats.digit_counts {
                let joint: u64 = stats
                    .joint_counts
                    .values()
                    .map(|row| row.get(&digit).copied().unwrap_or(0))
                    .sum();
                prop_assert_eq!(joint, count);
            }
            for (&base, row) in &stats.joint_counts {
                for (&digit, &count) in row {
                    prop_assert!(digit < base);
                    prop_assert!(count <= stats.base_counts[&base]);
                }
            }
        }
    }
}
