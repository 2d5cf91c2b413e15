//! Crate-wide error type.

use crate::closed_form::FeasibilityReport;
use crate::model::FrequencyMatrix;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("negative entry {value} at index {index}")]
    NegativeEntry { index: u32, value: f64 },

    #[error("entries sum to {actual}, expected 1 within {tol}")]
    SumNotOne { actual: f64, tol: f64 },

    #[error("vector has empty support")]
    EmptySupport,

    #[error("base {0} is smaller than 2")]
    InvalidBase(u32),

    #[error("row for base {base} has {len} entries, expected {base}")]
    RowLengthMismatch { base: u32, len: usize },

    #[error("frequency {value} at index {index} has no rational form with denominator <= {max_denominator}")]
    IrrationalFrequency {
        index: u32,
        value: f64,
        max_denominator: u64,
    },

    #[error("common denominator {0} exceeds the limit {1}")]
    DenominatorTooLarge(u64, u64),

    #[error("value {0} lies outside [0, 1)")]
    OutOfRange(f64),

    #[error("digit {digit} at position {position} is invalid for base {base}")]
    DigitOutOfRange {
        position: usize,
        digit: u32,
        base: u32,
    },

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("infeasible frequency pair: tail inequality violated at level {}", .0.violated_level.unwrap_or(0))]
    Infeasible(Box<FeasibilityReport>),

    #[error("scaling factor vanishes at level {0}: instance is boundary-feasible")]
    DegenerateLevel(u32),

    #[error("base-frequency vector has no support")]
    EmptyDenominator,

    #[error(
        "solver stopped after {iterations} iterations without converging \
         (row residual {row_residual:.3e}, column residual {column_residual:.3e})"
    )]
    NotConverged {
        iterations: usize,
        row_residual: f64,
        column_residual: f64,
        objective: f64,
    },

    #[error("no interior direction available for polytope sampling")]
    NoInteriorPoint,

    #[error("sampled matrix exceeds the closed-form dimension by {gap:.3e}")]
    CounterexampleFound {
        matrix: Box<FrequencyMatrix>,
        gap: f64,
    },

    #[error("cylinder prefix has measure zero at position {0}")]
    ZeroMeasurePrefix(usize),

    #[error("instance provides no base pattern")]
    MissingPattern,

    #[error("invalid instance: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
