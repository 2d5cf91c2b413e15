//! Instance files and the command-level entry points behind the `cantordim`
//! binary.
//!
//! An instance is a JSON document:
//!
//! ```json
//! {
//!   "alpha": [0.5, "1/3", "1/6"],
//!   "pattern": [2, 3],
//!   "solver": {"method": "ipf", "tol": 1e-10, "max_iter": 100000},
//!   "seed": 7,
//!   "samples": 500
//! }
//! ```
//!
//! `alpha` lists digit frequencies (array indexed from digit 0, or a map
//! from digit to frequency). Exactly one of `pattern` (one period of the
//! base sequence) and `d` (a map from base to frequency) must be present.
//! Frequencies are numbers or strings like `"1/3"`, which are parsed as
//! exact rationals — `1/3` is not a double, and validation does not forgive
//! sums that are off. `solver`, `seed` and `samples` are optional.
//!
//! Exit codes are a stable contract: 0 success, 1 parse or input error,
//! 2 infeasible instance, 3 solver non-convergence or a failed certificate.

use std::collections::BTreeMap;
use std::io::Write;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::closed_form::{dim_closed_form, DimensionReport};
use crate::error::{Error, Result};
use crate::expansion::{cylinder, digit_stats, expand_rational, DigitString, FrequencyStats};
use crate::measure::{CylinderMeasure, DimensionTrace, RNG_ALGORITHM};
use crate::model::{BasePattern, StochasticVector, SUM_TOL};
use crate::variational::{
    solve_variational, verify_kifer, Residuals, SolverConfig, SolverMethod,
    SOLVER_AGREEMENT_TOL,
};

/// Gap to the closed form below which `verify` reports success.
pub const VERIFY_GAP_TOL: f64 = SOLVER_AGREEMENT_TOL;

/// Default number of polytope samples drawn by `verify`.
pub const DEFAULT_SAMPLE_COUNT: usize = 500;

/// A parsed and validated instance file.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub alpha: StochasticVector,
    pub base: BaseSpec,
    pub solver: SolverConfig,
    pub seed: u64,
    pub samples: usize,
}

/// The base sequence of an instance: either abstract frequencies or one
/// period of a concrete pattern.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseSpec {
    Frequencies(StochasticVector),
    Pattern(BasePattern),
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawInstance =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;

        let alpha_map: BTreeMap<u32, f64> = match raw.alpha {
            RawAlpha::List(values) => values
                .into_iter()
                .enumerate()
                .map(|(digit, value)| Ok((digit as u32, value.resolve("alpha")?)))
                .collect::<Result<_>>()?,
            RawAlpha::Map(map) => map
                .into_iter()
                .map(|(key, value)| Ok((parse_index(&key, "alpha")?, value.resolve("alpha")?)))
                .collect::<Result<_>>()?,
        };
        let alpha = StochasticVector::validate(alpha_map, SUM_TOL)?;

        let base = match (raw.d, raw.pattern) {
            (Some(_), Some(_)) => {
                return Err(Error::Parse(
                    "fields \"d\" and \"pattern\" are mutually exclusive".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Parse(
                    "one of \"d\" or \"pattern\" is required".into(),
                ))
            }
            (Some(d), None) => {
                let map: BTreeMap<u32, f64> = d
                    .into_iter()
                    .map(|(key, value)| Ok((parse_index(&key, "d")?, value.resolve("d")?)))
                    .collect::<Result<_>>()?;
                BaseSpec::Frequencies(StochasticVector::validate(map, SUM_TOL)?)
            }
            (None, Some(pattern)) => BaseSpec::Pattern(BasePattern::new(pattern)?),
        };

        let mut solver = SolverConfig::default();
        if let Some(raw_solver) = raw.solver {
            if let Some(method) = raw_solver.method {
                solver.method = match method.as_str() {
                    "ipf" => SolverMethod::Ipf,
                    "mirror_descent" => SolverMethod::MirrorDescent,
                    other => {
                        return Err(Error::Parse(format!(
                            "unknown solver method {other:?}, expected \"ipf\" or \"mirror_descent\""
                        )))
                    }
                };
            }
            if let Some(tol) = raw_solver.tol {
                if tol <= 0.0 || tol.is_nan() {
                    return Err(Error::Parse("solver tol must be positive".into()));
                }
                solver.tol = tol;
            }
            if let Some(max_iter) = raw_solver.max_iter {
                if max_iter == 0 {
                    return Err(Error::Parse("solver max_iter must be at least 1".into()));
                }
                solver.max_iter = max_iter;
            }
        }
        let seed = raw.seed.unwrap_or(0);
        solver.seed = seed;

        Ok(Self {
            alpha,
            base,
            solver,
            seed,
            samples: raw.samples.unwrap_or(DEFAULT_SAMPLE_COUNT),
        })
    }

    /// Base frequencies of the instance, derived exactly from the pattern
    /// when a pattern was given.
    pub fn base_frequencies(&self) -> StochasticVector {
        match &self.base {
            BaseSpec::Frequencies(d) => d.clone(),
            BaseSpec::Pattern(pattern) => pattern.frequency_vector(),
        }
    }

    /// The concrete pattern, required by the sampling and expansion commands.
    pub fn pattern(&self) -> Result<&BasePattern> {
        match &self.base {
            BaseSpec::Pattern(pattern) => Ok(pattern),
            BaseSpec::Frequencies(_) => Err(Error::MissingPattern),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    alpha: RawAlpha,
    #[serde(default)]
    d: Option<BTreeMap<String, RawNumber>>,
    #[serde(default)]
    pattern: Option<Vec<u32>>,
    #[serde(default)]
    solver: Option<RawSolver>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    samples: Option<usize>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawAlpha {
    List(Vec<RawNumber>),
    Map(BTreeMap<String, RawNumber>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawNumber {
    Number(f64),
    Text(String),
}

impl RawNumber {
    fn resolve(self, field: &str) -> Result<f64> {
        match self {
            RawNumber::Number(value) => Ok(value),
            RawNumber::Text(text) => parse_fraction(&text)
                .ok_or_else(|| Error::Parse(format!("field {field:?}: cannot parse {text:?}"))),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    #[serde(default)]
    method: Option<String>,
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    max_iter: Option<usize>,
}

fn parse_index(key: &str, field: &str) -> Result<u32> {
    key.parse::<u32>()
        .map_err(|_| Error::Parse(format!("field {field:?}: key {key:?} is not an index")))
}

/// Parses `"p/q"` as an exact rational (`p`, `q` integers) or falls back to
/// a plain decimal.
fn parse_fraction(text: &str) -> Option<f64> {
    let text = text.trim();
    if let Some((numer, denom)) = text.split_once('/') {
        let numer: u64 = numer.trim().parse().ok()?;
        let denom: u64 = denom.trim().parse().ok()?;
        if denom == 0 {
            return None;
        }
        Some(numer as f64 / denom as f64)
    } else {
        text.parse::<f64>().ok()
    }
}

/// Parses the `--x` argument of `expand`: a decimal or an exact `"p/q"`.
pub fn parse_real(text: &str) -> Result<BigRational> {
    use num_bigint::BigInt;
    let text = text.trim();
    if let Some((numer, denom)) = text.split_once('/') {
        let numer: BigInt = numer
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("cannot parse numerator of {text:?}")))?;
        let denom: BigInt = denom
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("cannot parse denominator of {text:?}")))?;
        if denom == num_traits::Zero::zero() {
            return Err(Error::Parse("denominator must be nonzero".into()));
        }
        Ok(BigRational::new(numer, denom))
    } else {
        let value: f64 = text
            .parse()
            .map_err(|_| Error::Parse(format!("cannot parse {text:?} as a real")))?;
        BigRational::from_float(value)
            .ok_or_else(|| Error::Parse(format!("{text:?} is not a finite real")))
    }
}

/// `dim`: closed-form dimension of the instance.
pub fn cmd_dim(instance: &InstanceFile) -> Result<DimensionReport> {
    dim_closed_form(&instance.alpha, &instance.base_frequencies())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub objective: f64,
    pub gap_to_closed_form: f64,
    pub iterations: usize,
    pub residuals: Residuals,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyOutput {
    pub closed_form_dimension: f64,
    pub methods: BTreeMap<String, MethodReport>,
    pub sample_count: usize,
    pub max_sampled_dimension: f64,
    pub max_excess: f64,
    pub pass: bool,
}

/// `verify`: runs both solver methods plus the polytope-sampling
/// certificate. `pass` demands every gap at most [`VERIFY_GAP_TOL`].
pub fn cmd_verify(instance: &InstanceFile) -> Result<VerifyOutput> {
    let d = instance.base_frequencies();
    let closed = dim_closed_form(&instance.alpha, &d)?.dimension;

    let mut methods = BTreeMap::new();
    let mut pass = true;
    for (name, method) in [
        ("ipf", SolverMethod::Ipf),
        ("mirror_descent", SolverMethod::MirrorDescent),
    ] {
        let config = SolverConfig {
            method,
            ..instance.solver
        };
        let result = solve_variational(&instance.alpha, &d, &config)?;
        let gap = (result.objective - closed).abs();
        pass &= result.converged && gap <= VERIFY_GAP_TOL;
        methods.insert(
            name.to_string(),
            MethodReport {
                objective: result.objective,
                gap_to_closed_form: gap,
                iterations: result.iterations,
                residuals: result.residuals,
                converged: result.converged,
            },
        );
    }

    let certificate = verify_kifer(&instance.alpha, &d, instance.samples, instance.seed)?;
    pass &= certificate.pass;
    Ok(VerifyOutput {
        closed_form_dimension: closed,
        methods,
        sample_count: certificate.samples,
        max_sampled_dimension: certificate.max_sampled_dimension,
        max_excess: certificate.max_excess,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RngInfo {
    pub algorithm: &'static str,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleOutput {
    pub rng: RngInfo,
    pub depth: usize,
    pub closed_form_dimension: f64,
    /// `log mu / log length` at the final depth; absent for depth 0.
    pub final_ratio: Option<f64>,
    /// Empirical digit frequencies at the final depth.
    pub empirical_frequencies: BTreeMap<u32, f64>,
}

/// `sample`: draws a depth-`n` string from the optimal cylinder measure over
/// the instance pattern, writes the dimension trace as CSV to `trace_out`,
/// and returns the summary. Requires a concrete pattern.
pub fn cmd_sample(
    instance: &InstanceFile,
    depth: usize,
    seed: u64,
    trace_out: &mut dyn Write,
) -> Result<SampleOutput> {
    let pattern = instance.pattern()?;
    let d = instance.base_frequencies();
    let report = dim_closed_form(&instance.alpha, &d)?;
    let measure = CylinderMeasure::new(report.optimal_matrix.clone(), pattern.clone())?;

    let string = measure.sample_digits(depth, seed);
    let trace = if depth == 0 {
        DimensionTrace::default()
    } else {
        let depths: Vec<usize> = (1..=depth).collect();
        measure.pointwise_dimension_trace(&string, &depths)?
    };
    write_trace_csv(trace_out, &trace)?;

    let stats = digit_stats(&string);
    let empirical_frequencies = stats
        .digit_counts
        .iter()
        .map(|(&digit, &count)| (digit, count as f64 / depth as f64))
        .collect();
    Ok(SampleOutput {
        rng: RngInfo {
            algorithm: RNG_ALGORITHM,
            seed,
        },
        depth,
        closed_form_dimension: report.dimension,
        final_ratio: trace.final_ratio(),
        empirical_frequencies,
    })
}

/// Writes a dimension trace as CSV with the stable header
/// `depth,log_mu,log_len,ratio`; numbers carry 15 significant digits.
pub fn write_trace_csv(out: &mut dyn Write, trace: &DimensionTrace) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Parse(format!("cannot write trace: {e}"));
    writeln!(out, "depth,log_mu,log_len,ratio").map_err(io_err)?;
    for i in 0..trace.depths.len() {
        writeln!(
            out,
            "{},{},{},{}",
            trace.depths[i],
            sig15(trace.log_mu[i]),
            sig15(trace.log_len[i]),
            sig15(trace.ratio[i]),
        )
        .map_err(io_err)?;
    }
    Ok(())
}

/// Formats a float with 15 significant digits.
pub fn sig15(value: f64) -> String {
    format!("{value:.14e}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpandOutput {
    pub digits: Vec<u32>,
    pub stats: FrequencyStats,
    pub cylinder: CylinderOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderOutput {
    /// Exact lower endpoint as `p/q`, when the depth permits exactness.
    pub lower: Option<String>,
    pub upper: Option<String>,
    pub lower_approx: Option<f64>,
    pub upper_approx: Option<f64>,
    pub log_length: f64,
}

/// `expand`: digits of `x` over the instance pattern, with statistics and
/// the cylinder the prefix determines.
pub fn cmd_expand(instance: &InstanceFile, x: &BigRational, depth: usize) -> Result<ExpandOutput> {
    let pattern = instance.pattern()?;
    let string = expand_rational(x, pattern, depth)?;
    let stats = digit_stats(&string);
    let cyl = cylinder(&string);
    let cylinder = match cyl.exact {
        Some(ref interval) => CylinderOutput {
            lower: Some(interval.lower.to_string()),
            upper: Some(interval.upper.to_string()),
            lower_approx: num_traits::ToPrimitive::to_f64(&interval.lower),
            upper_approx: num_traits::ToPrimitive::to_f64(&interval.upper),
            log_length: cyl.log_length,
        },
        None => CylinderOutput {
            lower: None,
            upper: None,
            lower_approx: None,
            upper_approx: None,
            log_length: cyl.log_length,
        },
    };
    Ok(ExpandOutput {
        digits: string.digits().to_vec(),
        stats,
        cylinder,
    })
}

/// Process exit code for an error: 1 input/parse, 2 infeasible, 3 solver or
/// certificate failure.
pub fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Infeasible(_) | Error::DegenerateLevel(_) => 2,
        Error::NotConverged { .. } | Error::CounterexampleFound { .. } => 3,
        _ => 1,
    }
}

/// Convenience used by `expand` to rebuild a digit string for display.
pub fn digit_string_for(instance: &InstanceFile, digits: Vec<u32>) -> Result<DigitString> {
    DigitString::new(digits, instance.pattern()?.clone())
}
