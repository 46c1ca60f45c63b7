//! Asymptotic spectral models for thin curved waveguides.

// Tensor code indexes by component on purpose, and negated comparisons
// reject NaN along with out-of-range values.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod coefficient;
pub mod config;
pub mod cross_section;
pub mod effective;
pub mod eigensolve;
pub mod error;
pub mod exec;
pub mod expr;
pub mod fem;
pub mod geometry;
pub mod homogenization;
pub mod localization;
pub mod output;
pub mod pipeline;
pub mod sparse;
pub mod verification;

pub use error::{Error, Result};
pub use exec::Execution;
