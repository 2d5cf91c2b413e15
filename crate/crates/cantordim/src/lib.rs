//! Hausdorff dimension of digit-frequency level sets of Cantor series
//! expansions.
//!
//! A Cantor series expansion generalises base-`b` expansions to a varying
//! base sequence `b_1, b_2, ...`: every `x` in `[0, 1)` is written as
//! `sum_n digit_n / (b_1 ... b_n)` with `digit_n < b_n`. Prescribing the
//! limiting frequency of every digit carves `[0, 1)` into level sets whose
//! size is measured by Hausdorff dimension. This crate computes that
//! dimension three independent ways and cross-checks them:
//!
//! * [`closed_form`] evaluates an exact recursion that produces the
//!   dimension together with the certifying product-form digit-distribution
//!   matrix (the maximiser of Kifer's variational problem);
//! * [`variational`] re-solves the variational problem numerically by
//!   iterative proportional fitting and by mirror descent, and samples the
//!   marginal polytope to certify the supremum;
//! * [`measure`] builds the optimal cylinder measure, samples digit strings
//!   from it, and estimates the pointwise dimension by Monte Carlo.
//!
//! The `cantordim` binary exposes all of this behind `dim`, `verify`,
//! `sample` and `expand` subcommands; see the [`cli`] module and the
//! project book for file formats.
//!
//! ```
//! use cantordim::closed_form::dim_closed_form;
//! use cantordim::model::StochasticVector;
//!
//! let alpha = StochasticVector::from_slice(&[0.5, 1.0 / 3.0, 1.0 / 6.0])?;
//! let d = StochasticVector::new([(2, 0.5), (3, 0.5)].into())?;
//! let report = dim_closed_form(&alpha, &d)?;
//! assert!((report.dimension - 0.98127).abs() < 5e-5);
//! # Ok::<(), cantordim::error::Error>(())
//! ```

pub mod cli;
pub mod closed_form;
pub mod error;
pub mod expansion;
pub mod measure;
pub mod model;
pub mod variational;

pub use error::{Error, Result};
pub use model::{BasePattern, FrequencyMatrix, StochasticVector};

// The book's code blocks run as doc-tests, so the guide cannot drift from
// the library. One module per chapter keeps failures attributable.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/cantor-series.md")]
    mod cantor_series {}
    #[doc = include_str!("../../../book/src/frequencies.md")]
    mod frequencies {}
    #[doc = include_str!("../../../book/src/closed-form.md")]
    mod closed_form {}
    #[doc = include_str!("../../../book/src/variational.md")]
    mod variational {}
    #[doc = include_str!("../../../book/src/monte-carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
