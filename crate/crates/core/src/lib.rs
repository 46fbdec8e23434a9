//! Truncated divisor sums, singular series and prime correlation experiments.

pub mod approximants;
pub mod arith;
pub mod cli;
pub mod constants;
pub mod correlations;
pub mod error;
pub mod factor;
pub mod lemmas;
pub mod moments;
pub mod numeric;
pub mod singular;

pub use error::{Error, Result};
