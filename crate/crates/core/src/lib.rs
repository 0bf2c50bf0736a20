//! Compliance-weighted instrumental-variables estimation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dgp;
pub mod error;
pub mod estimators;
pub mod mathcore;
pub mod montecarlo;
pub mod multiinstrument;
pub mod weights;

pub use error::{Error, Result};
