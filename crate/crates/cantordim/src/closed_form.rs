//! The closed-form dimension of a digit-frequency level set.
//!
//! Fix a digit-frequency vector `alpha` (the prescribed limiting frequency of
//! every digit) and a base-frequency vector `d` (the limiting frequency of
//! every base value, supported on `2..=L`). Write `j0` for the smallest digit
//! with positive frequency. The level set of reals whose digits realise
//! `alpha` has Hausdorff dimension given by a quotient of an entropy over the
//! Lyapunov exponent `sum_n d_n log n`, and the entropy is produced by a
//! short inductive recursion:
//!
//! ```text
//! stage j0:    w_j = alpha_j,                 A_{j0} = alpha_{j0}
//! stage n:     w_j <- w_j * (1 - d_{n-1} / A_{n-1})   for j < n - 1,
//!              A_n  = sum_{j0 <= j <= n-1} w_j
//! ```
//!
//! from which two scaling sequences are read off:
//!
//! ```text
//! r_n = (1 / A_n) * prod_{k = j0+1}^{n-1} (1 - d_k / A_k)
//! t_j = alpha_j   / prod_{k = j0+1}^{j}   (1 - d_k / A_k)
//! ```
//!
//! The product-form matrix `p[n][j] = r_n * t_j` is row-stochastic, has
//! d-weighted column marginals exactly `alpha`, and maximises the dimension
//! over every digit-distribution matrix with those marginals (Kifer's
//! variational problem; see the `variational` module for the independent
//! numerical certificate). The dimension itself is
//!
//! ```text
//! dim = -( sum_j alpha_j log t_j + sum_n d_n log r_n ) / ( sum_n d_n log n ),
//! ```
//!
//! which coincides with Peyriere's entropy formula evaluated at `p`.
//!
//! Sign convention: the classical formulas are stated with a `sum p log p`
//! numerator, which is nonpositive; this module negates the numerator so
//! dimensions land in `[0, 1]`, matching Eggleston's constant-base theorem
//! `dim = -sum alpha_j log alpha_j / log b`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{kahan_sum, FrequencyMatrix, StochasticVector};

/// Strict positivity tolerance for the feasibility slacks.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// A scaling factor `1 - d_k / A_k` at or below this value means the input
/// sits on the boundary of the feasible region, where the recursion divides
/// by vanishing mass; such instances are rejected rather than decomposed.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Below this partial-product magnitude the scaling sequences switch to
/// log-space evaluation to dodge gradual underflow (only relevant for very
/// long base ranges).
const PRODUCT_UNDERFLOW_FLOOR: f64 = 1e-300;

/// Feasibility certificate for a digit/base frequency pair.
///
/// For each level `n` in `j0+1 ..= L` the slack is the tail inequality
///
/// ```text
/// slack_n = sum_{k >= n} d_k  -  sum_{j >= n-1} alpha_j ,
/// ```
///
/// i.e. positions carrying bases `>= n` must be able to host all digits
/// `>= n - 1`. The pair is feasible when every slack at level `>= j0 + 2`
/// is strictly positive and the level-`(j0+1)` slack — structurally
/// `-sum_{k <= j0} d_k` — vanishes, meaning no base mass sits at or below
/// `j0` (such bases can only emit digits that are forbidden).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Smallest level whose tail inequality fails, when infeasible.
    pub violated_level: Option<u32>,
    /// Slack value per level `n` in `j0+1 ..= L`.
    pub slack: BTreeMap<u32, f64>,
    /// Smallest digit with positive frequency.
    pub first_digit: u32,
    /// Largest base with positive frequency.
    pub last_base: u32,
}

impl FeasibilityReport {
    /// Smallest slack over the strict levels `j0+2 ..= L`; `+inf` when there
    /// are none (single-level instances).
    pub fn min_strict_slack(&self) -> f64 {
        self.slack
            .range(self.first_digit + 2..)
            .map(|(_, &s)| s)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Checks that `(alpha, d)` admits digit strings at all, with the default
/// tolerance [`FEASIBILITY_TOL`].
pub fn check_feasibility(
    alpha: &StochasticVector,
    d: &StochasticVector,
) -> Result<FeasibilityReport> {
    check_feasibility_with_tol(alpha, d, FEASIBILITY_TOL)
}

pub fn check_feasibility_with_tol(
    alpha: &StochasticVector,
    d: &StochasticVector,
    tol: f64,
) -> Result<FeasibilityReport> {
    if d.support_min() < 2 {
        return Err(Error::SupportMismatch(format!(
            "base frequencies must be supported on bases >= 2, found mass at {}",
            d.support_min()
        )));
    }
    let last_base = d.support_max();
    let first_digit = alpha.support_min();
    if alpha.support_max() > last_base - 1 {
        return Err(Error::SupportMismatch(format!(
            "digit {} has positive frequency but no base above it carries mass (largest base {})",
            alpha.support_max(),
            last_base
        )));
    }

    let mut slack = BTreeMap::new();
    let mut violated_level = None;
    for level in first_digit + 1..=last_base {
        let value = d.tail_mass(level) - alpha.tail_mass(level - 1);
        slack.insert(level, value);
        let violated = if level == first_digit + 1 {
            // Structurally nonpositive; a genuine deficit means base mass
            // below the first admissible base j0 + 1.
            value < -tol
        } else {
            value <= tol
        };
        if violated && violated_level.is_none() {
            violated_level = Some(level);
        }
    }
    Ok(FeasibilityReport {
        feasible: violated_level.is_none(),
        violated_level,
        slack,
        first_digit,
        last_base,
    })
}

/// The intermediate quantities of the scaling recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionTable {
    /// Smallest digit with positive frequency (`j0`).
    pub first_digit: u32,
    /// Largest base with positive frequency (`L`).
    pub last_base: u32,
    /// Remaining digit mass `A_n` per level `n` in `j0+1 ..= L`.
    pub tail_mass: BTreeMap<u32, f64>,
    /// Stage weights per level: `stage[n][j]` is the digit-`j` weight after
    /// the level-`n` update, for `j0 <= j <= n-1`.
    pub stage: BTreeMap<u32, BTreeMap<u32, f64>>,
    /// Row scalings `r_n` per base `n` in `j0+1 ..= L`.
    pub row_scale: BTreeMap<u32, f64>,
    /// Digit scalings `t_j` per digit `j` in `j0 ..= L-1`.
    pub digit_scale: BTreeMap<u32, f64>,
}

/// Runs the inductive recursion and returns the full table of stage weights
/// and scaling sequences. Fails with `Infeasible` when the tail inequalities
/// do not hold and with `DegenerateLevel` when a scaling factor vanishes
/// (boundary-feasible input).
pub fn scaling_recursion(
    alpha: &StochasticVector,
    d: &StochasticVector,
) -> Result<RecursionTable> {
    let report = check_feasibility(alpha, d)?;
    if !report.feasible {
        return Err(Error::Infeasible(Box::new(report)));
    }
    let j0 = report.first_digit;
    let last_base = report.last_base;

    // Stage weights for the current level, indexed by digit.
    let mut weights: BTreeMap<u32, f64> = (j0..=last_base - 1)
        .map(|digit| (digit, alpha.get(digit)))
        .collect();

    let mut tail_mass = BTreeMap::new();
    let mut stage = BTreeMap::new();
    // Cumulative product of the scaling factors 1 - d_k / A_k for
    // k = j0+1 ..= n-1, kept both directly and in log space.
    let mut product = 1.0f64;
    let mut log_product = 0.0f64;
    let mut products = BTreeMap::from([(j0 + 1, (product, log_product))]);

    let mut level = j0 + 1;
    loop {
        let level_weights: BTreeMap<u32, f64> = weights
            .range(j0..=level - 1)
            .map(|(&j, &w)| (j, w))
            .collect();
        let mass = kahan_sum(level_weights.values().copied());
        tail_mass.insert(level, mass);
        stage.insert(level, level_weights);
        if level == last_base {
            break;
        }

        let factor = 1.0 - d.get(level) / mass;
        if factor <= DEGENERACY_TOL {
            return Err(Error::DegenerateLevel(level));
        }
        for (&digit, weight) in weights.iter_mut() {
            // Digits at or above the next level keep their original mass.
            if digit < level {
                *weight *= factor;
            }
        }
        product *= factor;
        log_product += factor.ln();
        products.insert(level + 1, (product, log_product));
        level += 1;
    }

    let row_scale = (j0 + 1..=last_base)
        .map(|n| {
            let (prod, log_prod) = products[&n];
            let mass = tail_mass[&n];
            let value = if prod >= PRODUCT_UNDERFLOW_FLOOR {
                prod / mass
            } else {
                (log_prod - mass.ln()).exp()
            };
            (n, value)
        })
        .collect();
    let digit_scale = (j0..=last_base - 1)
        .map(|j| {
            let (prod, log_prod) = products[&(j + 1)];
            let mass = alpha.get(j);
            let value = if mass == 0.0 {
                0.0
            } else if prod >= PRODUCT_UNDERFLOW_FLOOR {
                mass / prod
            } else {
                (mass.ln() - log_prod).exp()
            };
            (j, value)
        })
        .collect();

    Ok(RecursionTable {
        first_digit: j0,
        last_base,
        tail_mass,
        stage,
        row_scale,
        digit_scale,
    })
}

/// The product-form optimal matrix read off a recursion table:
/// `p[n][j] = r_n * t_j` on the admissible cells, zero for digits below
/// `j0`, and uniform rows `1/n` for the (massless) bases `n <= j0`.
pub fn optimal_matrix(table: &RecursionTable) -> FrequencyMatrix {
    let mut rows = BTreeMap::new();
    for base in 2..=table.last_base {
        let row = if base <= table.first_digit {
            vec![1.0 / f64::from(base); base as usize]
        } else {
            let scale = table.row_scale[&base];
            (0..base)
                .map(|digit| {
                    if digit < table.first_digit {
                        0.0
                    } else {
                        scale * table.digit_scale[&digit]
                    }
                })
                .collect()
        };
        rows.insert(base, row);
    }
    FrequencyMatrix::new(rows).expect("recursion output always satisfies the row invariants")
}

/// Entropy-over-Lyapunov dimension of the level set with prescribed joint
/// (base, digit) distribution `matrix`, weighted by the base frequencies:
/// `-(sum_n d_n sum_j p log p) / (sum_n d_n log n)`, with `0 log 0 = 0`.
pub fn dim_peyriere(matrix: &FrequencyMatrix, d: &StochasticVector) -> Result<f64> {
    if d.support_len() == 0 {
        return Err(Error::EmptyDenominator);
    }
    let mut numerator_terms = Vec::with_capacity(d.support_len());
    let mut denominator_terms = Vec::with_capacity(d.support_len());
    for (base, weight) in d.iter() {
        let row = matrix.row(base).ok_or_else(|| {
            Error::SupportMismatch(format!("matrix has no row for base {base}"))
        })?;
        let entropy: f64 = row
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum();
        numerator_terms.push(weight * entropy);
        denominator_terms.push(weight * f64::from(base).ln());
    }
    let numerator = -kahan_sum(numerator_terms);
    let denominator = kahan_sum(denominator_terms);
    Ok(numerator / denominator)
}

/// Full dimension computation: feasibility, recursion, optimal matrix, and
/// the numerator/denominator decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    /// Hausdorff dimension of the level set, in `[0, 1]`.
    pub dimension: f64,
    /// Negated entropy numerator `-(sum_j alpha_j log t_j + sum_n d_n log r_n)`,
    /// nonnegative by concavity.
    pub numerator_entropy: f64,
    /// Lyapunov denominator `sum_n d_n log n`, positive for bases >= 2.
    pub denominator_lyapunov: f64,
    /// The certifying product-form matrix.
    pub optimal_matrix: FrequencyMatrix,
    /// The recursion table behind it.
    pub recursion: RecursionTable,
}

/// Evaluates the closed-form dimension of the digit-frequency level set.
pub fn dim_closed_form(
    alpha: &StochasticVector,
    d: &StochasticVector,
) -> Result<DimensionReport> {
    let recursion = scaling_recursion(alpha, d)?;
    let digit_part = alpha
        .iter()
        .map(|(digit, mass)| mass * recursion.digit_scale[&digit].ln());
    let base_part = d
        .iter()
        .map(|(base, mass)| mass * recursion.row_scale[&base].ln());
    let numerator_entropy = -(kahan_sum(digit_part) + kahan_sum(base_part));
    let denominator_lyapunov = kahan_sum(d.iter().map(|(base, mass)| mass * f64::from(base).ln()));
    let optimal = optimal_matrix(&recursion);
    Ok(DimensionReport {
        dimension: numerator_entropy / denominator_lyapunov,
        numerator_entropy,
        denominator_lyapunov,
        optimal_matrix: optimal,
        recursion,
    })
}

/// Eggleston's constant-base dimension
/// `-sum_{j < b} alpha_j log alpha_j / log b`.
pub fn dim_eggleston(alpha: &StochasticVector, base: u32) -> Result<f64> {
    if base < 2 {
        return Err(Error::InvalidBase(base));
    }
    if alpha.support_max() >= base {
        return Err(Error::SupportMismatch(format!(
            "digit {} is impossible in constant base {base}",
            alpha.support_max()
        )));
    }
    let entropy = -kahan_sum(alpha.iter().map(|(_, mass)| mass * mass.ln()));
    Ok(entropy / f64::from(base).ln())
}

/// Does `matrix` lie in the marginal polytope of `alpha`: rows stochastic
/// (guaranteed by construction of [`FrequencyMatrix`]) and d-weighted column
/// marginals equal to `alpha` within `tol`?
pub fn in_pi_alpha(
    matrix: &FrequencyMatrix,
    d: &StochasticVector,
    alpha: &StochasticVector,
    tol: f64,
) -> bool {
    let last_base = d.support_max();
    for digit in 0..last_base {
        let marginal = kahan_sum(
            d.iter()
                .map(|(base, weight)| weight * matrix.get(base, digit).unwrap_or(0.0)),
        );
        if (marginal - alpha.get(digit)).abs() > tol {
            return false;
        }
    }
    // Rows must exist for every base that carries mass.
    d.iter().all(|(base, _)| matrix.row(base).is_some())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SUM_TOL;
    use std::collections::BTreeMap;

    fn vector(pairs: &[(u32, f64)]) -> StochasticVector {
        StochasticVector::new(pairs.iter().copied().collect()).unwrap()
    }

    /// d = {2: 1/2, 3: 1/2}, alpha = (1/2, 1/3, 1/6).
    fn worked_instance() -> (StochasticVector, StochasticVector) {
        (
            StochasticVector::from_slice(&[0.5, 1.0 / 3.0, 1.0 / 6.0]).unwrap(),
            vector(&[(2, 0.5), (3, 0.5)]),
        )
    }

    /// Independent evaluation of the entropy-over-Lyapunov quotient by plain
    /// summation, used as the oracle for the closed-form path.
    fn quotient_by_direct_summation(matrix: &FrequencyMatrix, d: &StochasticVector) -> f64 {
        let mut numerator = 0.0;
        let mut denominator = 0.0;
        for (base, weight) in d.iter() {
            for &p in matrix.row(base).unwrap() {
                if p > 0.0 {
                    numerator -= weight * p * p.ln();
                }
            }
            denominator += weight * f64::from(base).ln();
        }
        numerator / denominator
    }

    #[test]
    fn feasibility_accepts_strict_interior_point() {
        let d = vector(&[(2, 2.0 / 3.0), (3, 1.0 / 3.0)]);
        let alpha = StochasticVector::from_slice(&[0.6, 0.3, 0.1]).unwrap();
        let report = check_feasibility(&alpha, &d).unwrap();
        assert!(report.feasible);
        assert_eq!(report.violated_level, None);
        // Level 3: d_3 - alpha_2 = 1/3 - 0.1.
        assert!((report.slack[&3] - (1.0 / 3.0 - 0.1)).abs() < 1e-12);
    }

    #[test]
    fn feasibility_rejects_overweight_top_digit() {
        // Digit 2 only appears under base 3, so its frequency is capped by d_3.
        let d = vector(&[(2, 2.0 / 3.0), (3, 1.0 / 3.0)]);
        let alpha = StochasticVector::from_slice(&[0.3, 0.3, 0.4]).unwrap();
        let report = check_feasibility(&alpha, &d).unwrap();
        assert!(!report.feasible);
        assert_eq!(report.violated_level, Some(3));
        assert!(report.slack[&3] < 0.0);
    }

    #[test]
    fn feasibility_constant_base() {
        let d = vector(&[(2, 1.0)]);
        let alpha = StochasticVector::from_slice(&[0.5, 0.5]).unwrap();
        assert!(check_feasibility(&alpha, &d).unwrap().feasible);
    }

    #[test]
    fn feasibility_rejects_base_mass_below_first_digit() {
        // All digit mass on 2, but base 2 emits only digits 0 and 1.
        let d = vector(&[(2, 0.5), (3, 0.5)]);
        let alpha = StochasticVector::point_mass(2);
        let report = check_feasibility(&alpha, &d).unwrap();
        assert!(!report.feasible);
        assert_eq!(report.violated_level, Some(3));
    }

    #[test]
    fn feasibility_support_mismatch() {
        let d = vector(&[(2, 0.5), (3, 0.5)]);
        let alpha = StochasticVector::from_slice(&[0.25, 0.25, 0.25, 0.25]).unwrap();
        assert!(matches!(
            check_feasibility(&alpha, &d),
            Err(Error::SupportMismatch(_))
        ));
    }

    #[test]
    fn recursion_matches_hand_run_on_worked_instance() {
        let (alpha, d) = worked_instance();
        let table = scaling_recursion(&alpha, &d).unwrap();
        assert_eq!(table.first_digit, 0);
        assert_eq!(table.last_base, 3);
        assert!((table.tail_mass[&1] - 0.5).abs() < 1e-15);
        assert!((table.tail_mass[&2] - 5.0 / 6.0).abs() < 1e-15);
        assert!((table.tail_mass[&3] - 0.5).abs() < 1e-15);
        assert!((table.row_scale[&2] - 1.2).abs() < 1e-15);
        assert!((table.row_scale[&3] - 0.8).abs() < 1e-15);
        assert!((table.digit_scale[&0] - 0.5).abs() < 1e-15);
        assert!((table.digit_scale[&1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((table.digit_scale[&2] - 5.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn recursion_constant_base_is_trivial() {
        let d = vector(&[(2, 1.0)]);
        let alpha = StochasticVector::from_slice(&[0.5, 0.5]).unwrap();
        let table = scaling_recursion(&alpha, &d).unwrap();
        assert_eq!(table.first_digit, 0);
        assert!((table.tail_mass[&2] - 1.0).abs() < 1e-15);
        assert!((table.row_scale[&2] - 1.0).abs() < 1e-15);
        assert!((table.digit_scale[&0] - 0.5).abs() < 1e-15);
        assert!((table.digit_scale[&1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn point_mass_digit_forces_deterministic_rows() {
        let d = vector(&[(2, 0.5), (3, 0.5)]);
        let alpha = StochasticVector::point_mass(0);
        let table = scaling_recursion(&alpha, &d).unwrap();
        let matrix = optimal_matrix(&table);
        assert!((table.digit_scale[&0] - 1.0).abs() < 1e-15);
        for base in [2, 3] {
            assert!((matrix.get(base, 0).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn optimal_matrix_matches_hand_run() {
        let (alpha, d) = worked_instance();
        let matrix = optimal_matrix(&scaling_recursion(&alpha, &d).unwrap());
        let row2 = matrix.row(2).unwrap();
        let row3 = matrix.row(3).unwrap();
        assert!((row2[0] - 0.6).abs() < 1e-12);
        assert!((row2[1] - 0.4).abs() < 1e-12);
        assert!((row3[0] - 0.4).abs() < 1e-12);
        assert!((row3[1] - 4.0 / 15.0).abs() < 1e-12);
        assert!((row3[2] - 1.0 / 3.0).abs() < 1e-12);
        // Cross-check one product by hand: p[2][0] = (6/5)(1/2).
        assert!((row2[0] - 1.2 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn optimal_matrix_fills_sub_threshold_rows_uniformly() {
        let d = vector(&[(3, 1.0)]);
        let alpha = StochasticVector::point_mass(2);
        let table = scaling_recursion(&alpha, &d).unwrap();
        assert_eq!(table.first_digit, 2);
        let matrix = optimal_matrix(&table);
        assert_eq!(matrix.row(2).unwrap(), &[0.5, 0.5]);
        assert_eq!(matrix.row(3).unwrap(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn peyriere_dimension_on_worked_instance() {
        let (alpha, d) = worked_instance();
        let matrix = optimal_matrix(&scaling_recursion(&alpha, &d).unwrap());
        let dim = dim_peyriere(&matrix, &d).unwrap();
        assert!((dim - quotient_by_direct_summation(&matrix, &d)).abs() < 1e-12);
        assert!((dim - 0.98127).abs() < 5e-5);
    }

    #[test]
    fn peyriere_uniform_rows_have_dimension_one() {
        let d = vector(&[(2, 0.25), (3, 0.25), (5, 0.5)]);
        let matrix = FrequencyMatrix::uniform([2, 3, 5]).unwrap();
        assert!((dim_peyriere(&matrix, &d).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn peyriere_deterministic_rows_have_dimension_zero() {
        let d = vector(&[(2, 0.5), (3, 0.5)]);
        let rows = BTreeMap::from([(2, vec![1.0, 0.0]), (3, vec![0.0, 1.0, 0.0])]);
        let matrix = FrequencyMatrix::new(rows).unwrap();
        assert_eq!(dim_peyriere(&matrix, &d).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_on_worked_instance() {
        let (alpha, d) = worked_instance();
        let report = dim_closed_form(&alpha, &d).unwrap();
        assert!((report.numerator_entropy - 0.87910).abs() < 5e-5);
        assert!((report.denominator_lyapunov - 0.89588).abs() < 5e-5);
        assert!((report.dimension - 0.98127).abs() < 5e-5);
        // Identity with the entropy formula evaluated at the optimal matrix.
        let bridge = dim_peyriere(&report.optimal_matrix, &d).unwrap();
        assert!((report.dimension - bridge).abs() < 1e-10);
    }

    #[test]
    fn closed_form_borel_normal_case_is_one() {
        let d = vector(&[(2, 1.0)]);
        let alpha = StochasticVector::from_slice(&[0.5, 0.5]).unwrap();
        let report = dim_closed_form(&alpha, &d).unwrap();
        assert!((report.dimension - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_eggleston_for_constant_base() {
        let d = vector(&[(3, 1.0)]);
        let alpha = StochasticVector::from_slice(&[0.5, 0.5]).unwrap();
        let report = dim_closed_form(&alpha, &d).unwrap();
        let eggleston = dim_eggleston(&alpha, 3).unwrap();
        let expected = 2.0f64.ln() / 3.0f64.ln();
        assert!((report.dimension - expected).abs() < 1e-12);
        assert!((eggleston - expected).abs() < 1e-12);
        assert!((report.dimension - eggleston).abs() < 1e-12);
    }

    #[test]
    fn eggleston_classical_values() {
        let uniform = StochasticVector::from_slice(&[0.5, 0.5]).unwrap();
        assert!((dim_eggleston(&uniform, 2).unwrap() - 1.0).abs() < 1e-15);
        let point = StochasticVector::point_mass(0);
        assert_eq!(dim_eggleston(&point, 2).unwrap(), 0.0);
        let err = dim_eggleston(&uniform, 1);
        assert!(matches!(err, Err(Error::InvalidBase(1))));
        let wide = StochasticVector::from_slice(&[0.25, 0.25, 0.25, 0.25]).unwrap();
        assert!(matches!(
            dim_eggleston(&wide, 3),
            Err(Error::SupportMismatch(_))
        ));
    }

    #[test]
    fn marginal_membership_of_the_optimal_matrix() {
        let (alpha, d) = worked_instance();
        let report = dim_closed_form(&alpha, &d).unwrap();
        assert!(in_pi_alpha(&report.optimal_matrix, &d, &alpha, 1e-10));

        // Uniform rows give marginal (5/12, 5/12, 1/6) != alpha.
        let uniform = FrequencyMatrix::uniform([2, 3]).unwrap();
        let marginal0: f64 = 0.5 * 0.5 + 0.5 / 3.0;
        assert!((marginal0 - 5.0 / 12.0).abs() < 1e-15);
        assert!(!in_pi_alpha(&uniform, &d, &alpha, 1e-10));

        // Perturbing alpha breaks membership of the optimal matrix.
        let perturbed = StochasticVector::from_slice(&[0.51, 1.0 / 3.0 - 0.01, 1.0 / 6.0]).unwrap();
        assert!(!in_pi_alpha(&report.optimal_matrix, &d, &perturbed, 1e-10));
    }

    #[test]
    fn marginal_of_uniform_rows_reaches_dimension_one() {
        // alpha built as the d-weighted marginal of uniform rows makes the
        // uniform matrix optimal, so the dimension is exactly 1.
        let d = vector(&[(2, 0.5), (3, 0.5)]);
        let alpha =
            StochasticVector::from_slice(&[0.5 / 2.0 + 0.5 / 3.0, 0.5 / 2.0 + 0.5 / 3.0, 0.5 / 3.0])
                .unwrap();
        let report = dim_closed_form(&alpha, &d).unwrap();
        assert!((report.dimension - 1.0).abs() < 1e-12);
        for (base, row) in report.optimal_matrix.rows() {
            for &p in row {
                assert!((p - 1.0 / f64::from(base)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn boundary_feasible_instance_is_rejected() {
        // alpha_2 = d_3 exactly: the level-3 slack vanishes, so the scaling
        // factor at level 2 would be zero. Strict feasibility rejects it.
        let d = vector(&[(2, 0.5), (3, 0.5)]);
        let alpha = vector(&[(1, 0.5), (2, 0.5)]);
        let result = scaling_recursion(&alpha, &d);
        assert!(matches!(result, Err(Error::Infeasible(_))));
    }

    #[test]
    fn infeasible_error_carries_the_report() {
        let d = vector(&[(2, 2.0 / 3.0), (3, 1.0 / 3.0)]);
        let alpha = StochasticVector::from_slice(&[0.3, 0.3, 0.4]).unwrap();
        match dim_closed_form(&alpha, &d) {
            Err(Error::Infeasible(report)) => {
                assert_eq!(report.violated_level, Some(3));
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn stage_weights_satisfy_marginal_peeling() {
        // stage[n][j] = alpha_j - sum_{k=j+1}^{n-1} d_k p[k][j], on the
        // worked instance and on a batch of random feasible ones.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut instances = vec![worked_instance()];
        for _ in 0..20 {
            instances.push(crate::variational::random_feasible_instance(
                &mut rng, 10, 0.05,
            ));
        }
        for (alpha, d) in instances {
            let table = scaling_recursion(&alpha, &d).unwrap();
            let matrix = optimal_matrix(&table);
            for (&level, weights) in &table.stage {
                for (&digit, &weight) in weights {
                    let peeled: f64 = (digit + 1..level)
                        .map(|k| d.get(k) * matrix.get(k, digit).unwrap_or(0.0))
                        .sum();
                    assert!(
                        (weight - (alpha.get(digit) - peeled)).abs() < 1e-12,
                        "stage identity failed at level {level}, digit {digit}"
                    );
                }
            }
        }
    }

    #[test]
    fn tail_mass_matches_its_closed_form() {
        let (alpha, d) = worked_instance();
        let table = scaling_recursion(&alpha, &d).unwrap();
        for level in table.first_digit + 1..=table.last_base {
            // The recursion never consults this telescoped expression; it is
            // the independent route to A_n.
            let direct = d.tail_mass(level) - alpha.tail_mass(level);
            assert!(
                (table.tail_mass[&level] - direct).abs() < 1e-12,
                "A_{level} mismatch: {} vs {}",
                table.tail_mass[&level],
                direct
            );
        }
        // Telescoping endpoint: A_L = d_L.
        assert!((table.tail_mass[&table.last_base] - d.get(table.last_base)).abs() < 1e-12);
    }

    #[test]
    fn reports_serialize_and_reparse_exactly() {
        let (alpha, d) = worked_instance();
        let report = dim_closed_form(&alpha, &d).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let reparsed: DimensionReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, reparsed);
        assert!(reparsed.dimension >= 0.0 && reparsed.dimension <= 1.0 + SUM_TOL);
    }
}
