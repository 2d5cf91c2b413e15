//! The cylinder measure of a digit-distribution matrix, and Monte Carlo
//! estimation of its pointwise dimension.
//!
//! A matrix `P` together with a concrete base pattern defines a probability
//! measure on `[0, 1)` through its values on cylinders,
//!
//! ```text
//! mu(C(digit_1, ..., digit_n)) = prod_{k<=n} P[b_k][digit_k],
//! ```
//!
//! i.e. digits are independent draws from the row of their position's base.
//! Along the cylinders of a mu-typical point the quotient
//! `log mu(C) / log |C|` converges to the dimension of the level set the
//! measure is concentrated on, which makes sampled digit strings a cheap
//! statistical cross-check of the closed-form dimension: sample deep, watch
//! the quotient settle.
//!
//! All measure arithmetic is carried out on logarithms; products of cylinder
//! probabilities underflow `f64` a few hundred digits in, and the sampling
//! depths used by the consistency checks are far beyond that.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expansion::DigitString;
use crate::model::{BasePattern, FrequencyMatrix};

/// Identifier of the generator behind [`CylinderMeasure::sample_digits`],
/// recorded in outputs so sampling runs can be reproduced bit for bit.
pub const RNG_ALGORITHM: &str = "chacha8";

/// A digit-distribution matrix interpreted as a measure on digit strings
/// over a concrete base pattern.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderMeasure {
    matrix: FrequencyMatrix,
    pattern: BasePattern,
}

impl CylinderMeasure {
    /// Pairs a matrix with a pattern; every base occurring in the pattern
    /// must have a row.
    pub fn new(matrix: FrequencyMatrix, pattern: BasePattern) -> Result<Self> {
        for &base in pattern.as_slice() {
            if matrix.row(base).is_none() {
                return Err(Error::SupportMismatch(format!(
                    "pattern uses base {base} but the matrix has no row for it"
                )));
            }
        }
        Ok(Self { matrix, pattern })
    }

    pub fn matrix(&self) -> &FrequencyMatrix {
        &self.matrix
    }

    pub fn pattern(&self) -> &BasePattern {
        &self.pattern
    }

    /// Log measure of the cylinder of `s`: `sum_k log P[b_k][digit_k]`.
    /// Zero-probability digits give a cylinder of measure zero, reported as
    /// `-inf`. The depth-0 prefix has measure 1.
    ///
    /// # Panics
    ///
    /// When `s` was built over a different base pattern.
    pub fn log_mu_cylinder(&self, s: &DigitString) -> f64 {
        assert_eq!(
            s.pattern(),
            &self.pattern,
            "digit string and measure use different base patterns"
        );
        let mut log_mu = 0.0;
        for (offset, &digit) in s.digits().iter().enumerate() {
            let base = s.base_at(offset + 1);
            let p = self.matrix.get(base, digit).expect("row checked in new");
            if p == 0.0 {
                return f64::NEG_INFINITY;
            }
            log_mu += p.ln();
        }
        log_mu
    }

    /// Draws a depth-`n` digit string, each digit an independent draw from
    /// the row of its position's base. Deterministic for a given seed; the
    /// generator is ChaCha8 ([`RNG_ALGORITHM`]).
    pub fn sample_digits(&self, depth: usize, seed: u64) -> DigitString {
        self.sample_with(ChaCha8Rng::seed_from_u64(seed), depth)
    }

    /// Stream-split sampling: strings for different `stream` values are
    /// independent while staying reproducible from one master seed.
    pub fn sample_digits_stream(&self, depth: usize, master_seed: u64, stream: u64) -> DigitString {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream);
        self.sample_with(rng, depth)
    }

    fn sample_with(&self, mut rng: ChaCha8Rng, depth: usize) -> DigitString {
        let mut digits = Vec::with_capacity(depth);
        for position in 1..=depth {
            let base = self.pattern.base_at(position);
            let row = self.matrix.row(base).expect("row checked in new");
            let mut u: f64 = rng.random();
            let mut chosen = None;
            for (digit, &p) in row.iter().enumerate() {
                if u < p {
                    chosen = Some(digit as u32);
                    break;
                }
                u -= p;
            }
            // Rounding can leave a sliver above the accumulated sum; it
            // belongs to the last digit with positive probability.
            let digit = chosen.unwrap_or_else(|| {
                row.iter().rposition(|&p| p > 0.0).expect("stochastic row") as u32
            });
            digits.push(digit);
        }
        DigitString::new(digits, self.pattern.clone()).expect("sampled digits are below their base")
    }

    /// Ratio `log mu / log length` along the cylinders of `s` at the given
    /// depths. Fails with [`Error::ZeroMeasurePrefix`] if `s` passes through
    /// a zero-probability digit at or before the deepest requested depth.
    pub fn pointwise_dimension_trace(
        &self,
        s: &DigitString,
        depths: &[usize],
    ) -> Result<DimensionTrace> {
        assert!(
            depths.iter().all(|&depth| depth >= 1),
            "trace depths are 1-based"
        );
        assert!(
            depths.windows(2).all(|pair| pair[0] < pair[1]),
            "trace depths must be strictly increasing"
        );
        let deepest = depths.last().copied().unwrap_or(0);
        assert!(deepest <= s.depth(), "trace depth exceeds the digit string");

        let mut trace = DimensionTrace {
            depths: depths.to_vec(),
            log_mu: Vec::with_capacity(depths.len()),
            log_len: Vec::with_capacity(depths.len()),
            ratio: Vec::with_capacity(depths.len()),
        };
        let mut log_mu = 0.0;
        let mut log_len = 0.0;
        let mut next = depths.iter().peekable();
        for (offset, &digit) in s.digits().iter().enumerate().take(deepest) {
            let position = offset + 1;
            let base = s.base_at(position);
            let p = self.matrix.get(base, digit).expect("row checked in new");
            if p == 0.0 {
                return Err(Error::ZeroMeasurePrefix(position));
            }
            log_mu += p.ln();
            log_len -= f64::from(base).ln();
            if next.peek() == Some(&&position) {
                next.next();
                trace.log_mu.push(log_mu);
                trace.log_len.push(log_len);
                trace.ratio.push(log_mu / log_len);
            }
        }
        Ok(trace)
    }
}

/// The running `log mu / log length` quotient of one digit string.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DimensionTrace {
    pub depths: Vec<usize>,
    /// Log measure of the depth-`n` cylinder, nonpositive.
    pub log_mu: Vec<f64>,
    /// Log length of the depth-`n` cylinder, negative.
    pub log_len: Vec<f64>,
    /// `log_mu / log_len`, nonnegative.
    pub ratio: Vec<f64>,
}

impl DimensionTrace {
    /// The deepest ratio, the Monte Carlo dimension estimate.
    pub fn final_ratio(&self) -> Option<f64> {
        self.ratio.last().copied()
    }
}
