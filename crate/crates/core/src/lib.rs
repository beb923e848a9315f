// Negated comparisons such as `!(x > 0.0)` are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod geometry_sim;
pub mod mac_sim;
pub mod math;
pub mod model;
pub mod optimizer;
pub mod units;

pub use error::{Error, Result};
