//! Numerical certification of the closed-form dimension.
//!
//! The closed form asserts that the dimension of a digit-frequency level set
//! equals the supremum, over all digit-distribution matrices `P` whose
//! d-weighted column marginals are `alpha`, of the entropy-over-Lyapunov
//! quotient of `P` (Kifer's variational problem), and that the supremum is
//! attained at the product-form matrix of the recursion. This module attacks
//! the same maximisation numerically, two independent ways:
//!
//! * **Iterative proportional fitting** ([`SolverMethod::Ipf`]): alternate
//!   row normalisation with d-weighted column scaling, starting from uniform
//!   rows. Because the maximiser has product form `r_n * t_j`, the scaling
//!   iteration is exact in the limit.
//! * **Mirror descent** ([`SolverMethod::MirrorDescent`]): entropic mirror
//!   ascent on the Lagrangian. The row blocks are maximised in closed form
//!   (the entropic mirror map turns the column prices into softmax rows) and
//!   the prices descend the dual by a backtracking gradient step.
//!
//! [`sample_pi_alpha`] draws further members of the marginal polytope by
//! perturbing the optimum along elementary null-space moves, and
//! [`verify_kifer`] checks that none of them beats the closed form.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::closed_form::{check_feasibility, dim_closed_form};
use crate::error::{Error, Result};
use crate::model::{FrequencyMatrix, StochasticVector};

/// Agreement demanded between a solver objective and the closed form.
pub const SOLVER_AGREEMENT_TOL: f64 = 1e-6;

/// Sampled members of the marginal polytope may not exceed the closed-form
/// dimension by more than this.
pub const SUPREMUM_SLACK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Ipf,
    MirrorDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Convergence tolerance on constraint residuals and objective change.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed recorded alongside results; the solvers themselves are
    /// deterministic, the seed feeds derived sampling runs.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::Ipf,
            tol: 1e-10,
            max_iter: 100_000,
            seed: 0,
        }
    }
}

/// Final constraint violations of a solver run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Largest deviation of a row sum from 1.
    pub row: f64,
    /// Largest deviation of a d-weighted column marginal from its target.
    pub column: f64,
    /// Last observed change of the objective.
    pub objective_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    /// The maximising matrix found, rows covering every base with positive
    /// frequency.
    pub matrix: FrequencyMatrix,
    /// Dimension value at the maximiser (negated-numerator convention).
    pub objective: f64,
    pub iterations: usize,
    pub residuals: Residuals,
    pub converged: bool,
}

/// Support lattice of the optimisation: one row per base with positive
/// frequency, columns restricted to digits with positive target frequency.
/// Columns are sorted ascending, so each row sees a prefix of them.
struct Lattice {
    columns: Vec<u32>,
    targets: Vec<f64>,
    rows: Vec<LatticeRow>,
    /// Lyapunov denominator `sum_n d_n log n`.
    denominator: f64,
}

struct LatticeRow {
    base: u32,
    weight: f64,
    /// Number of admissible columns (those with digit < base).
    ncols: usize,
}

impl Lattice {
    fn build(alpha: &StochasticVector, d: &StochasticVector) -> Self {
        let columns: Vec<u32> = alpha.iter().map(|(digit, _)| digit).collect();
        let targets: Vec<f64> = alpha.iter().map(|(_, mass)| mass).collect();
        let rows: Vec<LatticeRow> = d
            .iter()
            .map(|(base, weight)| LatticeRow {
                base,
                weight,
                ncols: columns.iter().take_while(|&&digit| digit < base).count(),
            })
            .collect();
        let denominator = rows
            .iter()
            .map(|row| row.weight * f64::from(row.base).ln())
            .sum();
        Self {
            columns,
            targets,
            rows,
            denominator,
        }
    }

    fn uniform_state(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|row| vec![1.0 / row.ncols as f64; row.ncols])
            .collect()
    }

    /// Extracts the lattice cells of an explicit starting matrix.
    fn state_from_matrix(&self, matrix: &FrequencyMatrix) -> Result<Vec<Vec<f64>>> {
        self.rows
            .iter()
            .map(|row| {
                let source = matrix.row(row.base).ok_or_else(|| {
                    Error::SupportMismatch(format!("start matrix lacks row {}", row.base))
                })?;
                Ok(self.columns[..row.ncols]
                    .iter()
                    .map(|&digit| source[digit as usize])
                    .collect())
            })
            .collect()
    }

    /// Objective value (dimension) of a row-stochastic state.
    fn objective(&self, state: &[Vec<f64>]) -> f64 {
        let entropy: f64 = self
            .rows
            .iter()
            .zip(state)
            .map(|(row, cells)| {
                let row_entropy: f64 = cells
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| p * p.ln())
                    .sum();
                row.weight * row_entropy
            })
            .sum();
        -entropy / self.denominator
    }

    /// d-weighted column marginals of a state.
    fn marginals(&self, state: &[Vec<f64>]) -> Vec<f64> {
        let mut marginals = vec![0.0; self.columns.len()];
        for (row, cells) in self.rows.iter().zip(state) {
            for (column, &p) in cells.iter().enumerate() {
                marginals[column] += row.weight * p;
            }
        }
        marginals
    }

    fn column_residual(&self, state: &[Vec<f64>]) -> f64 {
        self.marginals(state)
            .iter()
            .zip(&self.targets)
            .map(|(m, t)| (m - t).abs())
            .fold(0.0, f64::max)
    }

    fn row_residual(&self, state: &[Vec<f64>]) -> f64 {
        state
            .iter()
            .map(|cells| (cells.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Packs a lattice state into a full matrix, zeros on inactive digits.
    fn to_matrix(&self, state: &[Vec<f64>]) -> FrequencyMatrix {
        let mut rows = BTreeMap::new();
        for (row, cells) in self.rows.iter().zip(state) {
            let mut full = vec![0.0; row.base as usize];
            for (column, &p) in cells.iter().enumerate() {
                full[self.columns[column] as usize] = p;
            }
            rows.insert(row.base, full);
        }
        FrequencyMatrix::new(rows).expect("solver states keep rows stochastic")
    }
}

/// Maximises the entropy-over-Lyapunov quotient over the marginal polytope
/// of `alpha`, starting from uniform rows.
pub fn solve_variational(
    alpha: &StochasticVector,
    d: &StochasticVector,
    config: &SolverConfig,
) -> Result<SolverResult> {
    solve_with_start(alpha, d, config, None)
}

/// Like [`solve_variational`] but warm-started from an explicit matrix in
/// the polytope (used to confirm the optimum is a fixed point).
pub fn solve_variational_with_init(
    alpha: &StochasticVector,
    d: &StochasticVector,
    config: &SolverConfig,
    init: &FrequencyMatrix,
) -> Result<SolverResult> {
    solve_with_start(alpha, d, config, Some(init))
}

/// Per-iteration trajectory of a solver run, one entry per sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverTrace {
    pub objectives: Vec<f64>,
    pub column_residuals: Vec<f64>,
}

/// [`solve_variational`] together with the per-sweep objective and residual
/// trajectory (used by the monotonicity checks and by verbose reports).
pub fn solve_variational_traced(
    alpha: &StochasticVector,
    d: &StochasticVector,
    config: &SolverConfig,
) -> Result<(SolverResult, SolverTrace)> {
    let mut trace = SolverTrace::default();
    let result = solve_traced(alpha, d, config, None, &mut trace)?;
    Ok((result, trace))
}

fn solve_with_start(
    alpha: &StochasticVector,
    d: &StochasticVector,
    config: &SolverConfig,
    init: Option<&FrequencyMatrix>,
) -> Result<SolverResult> {
    let mut trace = SolverTrace::default();
    solve_traced(alpha, d, config, init, &mut trace)
}

fn solve_traced(
    alpha: &StochasticVector,
    d: &StochasticVector,
    config: &SolverConfig,
    init: Option<&FrequencyMatrix>,
    trace: &mut SolverTrace,
) -> Result<SolverResult> {
    let report = check_feasibility(alpha, d)?;
    if !report.feasible {
        return Err(Error::Infeasible(Box::new(report)));
    }
    let lattice = Lattice::build(alpha, d);
    match config.method {
        SolverMethod::Ipf => ipf(&lattice, config, init, trace),
        SolverMethod::MirrorDescent => mirror_descent(&lattice, config, init, trace),
    }
}

fn ipf(
    lattice: &Lattice,
    config: &SolverConfig,
    init: Option<&FrequencyMatrix>,
    trace: &mut SolverTrace,
) -> Result<SolverResult> {
    let mut state = match init {
        Some(matrix) => lattice.state_from_matrix(matrix)?,
        None => lattice.uniform_state(),
    };
    let mut objective = lattice.objective(&state);
    for sweep in 1..=config.max_iter {
        // Column pass: scale each column onto its target marginal.
        let marginals = lattice.marginals(&state);
        for cells in state.iter_mut() {
            for (column, p) in cells.iter_mut().enumerate() {
                *p *= lattice.targets[column] / marginals[column];
            }
        }
        // Row pass: renormalise each row.
        for cells in state.iter_mut() {
            let sum: f64 = cells.iter().sum();
            for p in cells.iter_mut() {
                *p /= sum;
            }
        }

        let next_objective = lattice.objective(&state);
        let objective_delta = (next_objective - objective).abs();
        objective = next_objective;
        let residuals = Residuals {
            row: lattice.row_residual(&state),
            column: lattice.column_residual(&state),
            objective_delta,
        };
        trace.objectives.push(objective);
        trace.column_residuals.push(residuals.column);
        if residuals.row.max(residuals.column).max(objective_delta) <= config.tol {
            return Ok(SolverResult {
                matrix: lattice.to_matrix(&state),
                objective,
                iterations: sweep,
                residuals,
                converged: true,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: config.max_iter,
        row_residual: lattice.row_residual(&state),
        column_residual: lattice.column_residual(&state),
        objective,
    })
}

fn mirror_descent(
    lattice: &Lattice,
    config: &SolverConfig,
    init: Option<&FrequencyMatrix>,
    trace: &mut SolverTrace,
) -> Result<SolverResult> {
    let ncols = lattice.columns.len();
    // Column prices; zero prices reproduce uniform rows. A warm start seeds
    // the prices from the matrix cells of the first full-width row, which is
    // exact for product-form matrices.
    let mut prices = vec![0.0; ncols];
    if let Some(matrix) = init {
        let state = lattice.state_from_matrix(matrix)?;
        if let Some((index, _)) = lattice
            .rows
            .iter()
            .enumerate()
            .find(|(_, row)| row.ncols == ncols)
        {
            for (column, &p) in state[index].iter().enumerate() {
                prices[column] = if p > 0.0 { -p.ln() } else { 0.0 };
            }
        }
    }

    let dual = |prices: &[f64]| -> f64 {
        let mut value = 0.0;
        for row in &lattice.rows {
            value += row.weight * log_sum_exp_neg(&prices[..row.ncols]);
        }
        for (column, &price) in prices.iter().enumerate() {
            value += price * lattice.targets[column];
        }
        value
    };
    let primal = |prices: &[f64]| -> Vec<Vec<f64>> {
        lattice
            .rows
            .iter()
            .map(|row| {
                let log_norm = log_sum_exp_neg(&prices[..row.ncols]);
                prices[..row.ncols]
                    .iter()
                    .map(|&price| (-price - log_norm).exp())
                    .collect()
            })
            .collect()
    };

    let mut dual_value = dual(&prices);
    let mut state = primal(&prices);
    let mut objective = lattice.objective(&state);
    for iteration in 1..=config.max_iter {
        let marginals = lattice.marginals(&state);
        let gradient: Vec<f64> = lattice
            .targets
            .iter()
            .zip(&marginals)
            .map(|(t, m)| t - m)
            .collect();
        // Diagonal curvature of the dual, sum_n d_n p (1 - p) per column,
        // preconditions the step so the tail of the run behaves like a
        // damped Jacobi iteration.
        let mut curvature = vec![0.0; ncols];
        for (row, cells) in lattice.rows.iter().zip(&state) {
            for (column, &p) in cells.iter().enumerate() {
                curvature[column] += row.weight * p * (1.0 - p);
            }
        }
        let direction: Vec<f64> = gradient
            .iter()
            .zip(&curvature)
            .map(|(g, h)| g / h.max(f64::MIN_POSITIVE))
            .collect();
        let predicted: f64 = gradient.iter().zip(&direction).map(|(g, s)| g * s).sum();

        // Armijo backtracking while its decrease is resolvable in f64;
        // close to the optimum the predicted decrease drowns in rounding,
        // where the damped preconditioned step is safe on its own.
        let resolvable = 1e-4 * predicted > 1e-14 * (1.0 + dual_value.abs());
        let mut took_step = false;
        if resolvable {
            let mut step = 1.0f64;
            for _ in 0..40 {
                let candidate: Vec<f64> = prices
                    .iter()
                    .zip(&direction)
                    .map(|(price, s)| price - step * s)
                    .collect();
                let candidate_value = dual(&candidate);
                if candidate_value <= dual_value - 1e-4 * step * predicted {
                    prices = candidate;
                    dual_value = candidate_value;
                    took_step = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if !took_step {
            for (price, s) in prices.iter_mut().zip(&direction) {
                *price -= 0.5 * s;
            }
            dual_value = dual(&prices);
        }

        state = primal(&prices);
        let next_objective = lattice.objective(&state);
        let objective_delta = (next_objective - objective).abs();
        objective = next_objective;
        let residuals = Residuals {
            row: lattice.row_residual(&state),
            column: lattice.column_residual(&state),
            objective_delta,
        };
        trace.objectives.push(objective);
        trace.column_residuals.push(residuals.column);
        if residuals.column.max(residuals.row).max(objective_delta) <= config.tol {
            return Ok(SolverResult {
                matrix: lattice.to_matrix(&state),
                objective,
                iterations: iteration,
                residuals,
                converged: true,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: config.max_iter,
        row_residual: lattice.row_residual(&state),
        column_residual: lattice.column_residual(&state),
        objective,
    })
}

/// `log sum_i exp(-x_i)` with the usual max shift.
fn log_sum_exp_neg(values: &[f64]) -> f64 {
    let shift = values.iter().copied().fold(f64::INFINITY, f64::min);
    let sum: f64 = values.iter().map(|&v| (shift - v).exp()).sum();
    sum.ln() - shift
}

/// Draws `count` members of the marginal polytope of `alpha` by perturbing
/// the optimal matrix along elementary null-space moves: for two bases and
/// two digits admissible in both rows, mass `eps/d_n` is shifted between the
/// four cells so that row sums and weighted column marginals are untouched.
/// Moves blocked by zero entries are skipped, so instances whose polytope is
/// a single point yield `count` copies of the optimum.
pub fn sample_pi_alpha(
    alpha: &StochasticVector,
    d: &StochasticVector,
    count: usize,
    seed: u64,
) -> Result<Vec<FrequencyMatrix>> {
    let report = dim_closed_form(alpha, d)?;
    let optimum = report.optimal_matrix;
    let support: Vec<(u32, f64)> = d.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);

    let cells: usize = support.iter().map(|&(base, _)| base as usize).sum();
    let moves_per_sample = (4 * cells).min(256);

    for _ in 0..count {
        let mut rows: BTreeMap<u32, Vec<f64>> = optimum.as_map().clone();
        if support.len() >= 2 {
            for _ in 0..moves_per_sample {
                let pick1 = rng.random_range(0..support.len());
                let pick2 = rng.random_range(0..support.len());
                if pick1 == pick2 {
                    continue;
                }
                let (base1, weight1) = support[pick1];
                let (base2, weight2) = support[pick2];
                let width = base1.min(base2);
                if width < 2 {
                    continue;
                }
                let digit1 = rng.random_range(0..width);
                let digit2 = rng.random_range(0..width);
                if digit1 == digit2 {
                    continue;
                }
                let p1 = rows[&base1][digit1 as usize];
                let p1b = rows[&base1][digit2 as usize];
                let p2 = rows[&base2][digit1 as usize];
                let p2b = rows[&base2][digit2 as usize];
                // eps > 0 drains (base1, digit2) and (base2, digit1).
                let upper = (weight1 * p1b).min(weight2 * p2);
                let lower = -(weight1 * p1).min(weight2 * p2b);
                if upper - lower <= 0.0 {
                    continue;
                }
                let eps = 0.9999 * rng.random_range(lower..=upper);
                let row1 = rows.get_mut(&base1).expect("support row");
                row1[digit1 as usize] = (p1 + eps / weight1).max(0.0);
                row1[digit2 as usize] = (p1b - eps / weight1).max(0.0);
                let row2 = rows.get_mut(&base2).expect("support row");
                row2[digit1 as usize] = (p2 - eps / weight2).max(0.0);
                row2[digit2 as usize] = (p2b + eps / weight2).max(0.0);
            }
        }
        samples.push(FrequencyMatrix::new(rows)?);
    }
    Ok(samples)
}

/// Outcome of the supremum certification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KiferReport {
    /// Closed-form dimension being certified.
    pub closed_form: f64,
    /// Objective reached by the default solver.
    pub solver_objective: f64,
    /// `|solver_objective - closed_form|`.
    pub solver_gap: f64,
    pub solver_iterations: usize,
    /// Number of polytope members sampled.
    pub samples: usize,
    /// Largest dimension observed among the samples.
    pub max_sampled_dimension: f64,
    /// Largest amount by which a sample exceeded the closed form
    /// (nonpositive when the supremum holds strictly).
    pub max_excess: f64,
    pub pass: bool,
}

/// Certifies the variational formula on one instance: the solver must land
/// on the closed-form value and no sampled member of the polytope may beat
/// it. A sample that does is a [`Error::CounterexampleFound`] — it signals
/// an implementation bug, the mathematics excludes it.
pub fn verify_kifer(
    alpha: &StochasticVector,
    d: &StochasticVector,
    count: usize,
    seed: u64,
) -> Result<KiferReport> {
    let closed_form = dim_closed_form(alpha, d)?.dimension;
    let solver = solve_variational(alpha, d, &SolverConfig::default())?;
    let samples = sample_pi_alpha(alpha, d, count, seed)?;

    let mut max_sampled = f64::NEG_INFINITY;
    let mut worst: Option<&FrequencyMatrix> = None;
    for sample in &samples {
        let value = crate::closed_form::dim_peyriere(sample, d)?;
        if value > max_sampled {
            max_sampled = value;
            worst = Some(sample);
        }
    }
    let max_excess = if samples.is_empty() {
        f64::NEG_INFINITY
    } else {
        max_sampled - closed_form
    };
    if max_excess > SUPREMUM_SLACK_TOL {
        return Err(Error::CounterexampleFound {
            matrix: Box::new(worst.expect("nonempty samples").clone()),
            gap: max_excess,
        });
    }
    let solver_gap = (solver.objective - closed_form).abs();
    Ok(KiferReport {
        closed_form,
        solver_objective: solver.objective,
        solver_gap,
        solver_iterations: solver.iterations,
        samples: samples.len(),
        max_sampled_dimension: max_sampled,
        max_excess,
        pass: solver_gap <= SOLVER_AGREEMENT_TOL,
    })
}

/// Draws a random feasible `(alpha, d)` pair with every strict feasibility
/// slack at least `min_slack`, for property tests and verification sweeps.
///
/// The digit frequencies are manufactured as the d-weighted marginal of a
/// random row-stochastic matrix biased towards uniform rows, which keeps the
/// instance comfortably inside the feasible region; draws violating the
/// slack floor are rejected and retried.
pub fn random_feasible_instance<R: Rng>(
    rng: &mut R,
    max_base: u32,
    min_slack: f64,
) -> (StochasticVector, StochasticVector) {
    assert!(max_base >= 2);
    loop {
        let last_base = rng.random_range(2..=max_base);
        let first_digit = match rng.random_range(0..10) {
            0 if last_base >= 4 => 2,
            1 | 2 if last_base >= 3 => 1,
            _ => 0,
        };

        // Base frequencies on {first_digit+1 .. last_base}, heavier at the top.
        let lowest_base = 2.max(first_digit + 1);
        let mut weights: BTreeMap<u32, f64> = BTreeMap::new();
        for base in lowest_base..=last_base {
            if base == last_base {
                weights.insert(base, 0.6 + rng.random::<f64>());
            } else if rng.random::<f64>() < 0.75 {
                weights.insert(base, 0.2 + rng.random::<f64>());
            }
        }
        let total: f64 = weights.values().sum();
        let d_map: BTreeMap<u32, f64> = weights.into_iter().map(|(b, w)| (b, w / total)).collect();
        let Ok(d) = StochasticVector::new(d_map) else {
            continue;
        };

        // Digit frequencies as the marginal of near-uniform random rows.
        let mut alpha_map: BTreeMap<u32, f64> = BTreeMap::new();
        let skip_column = if last_base > first_digit + 2 && rng.random::<f64>() < 0.25 {
            Some(rng.random_range(first_digit + 1..last_base - 1))
        } else {
            None
        };
        for (base, weight) in d.iter() {
            let digits: Vec<u32> = (first_digit..base)
                .filter(|&digit| Some(digit) != skip_column)
                .collect();
            let raw: Vec<f64> = digits.iter().map(|_| 0.4 + rng.random::<f64>()).collect();
            let row_total: f64 = raw.iter().sum();
            for (&digit, &mass) in digits.iter().zip(&raw) {
                *alpha_map.entry(digit).or_insert(0.0) += weight * mass / row_total;
            }
        }
        let Ok(alpha) = StochasticVector::new(alpha_map) else {
            continue;
        };

        let Ok(report) = check_feasibility(&alpha, &d) else {
            continue;
        };
        if report.feasible && report.min_strict_slack() >= min_slack {
            return (alpha, d);
        }
    }
}
