#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod amp;
pub mod distill;
pub mod error;
pub mod harness;
pub mod nn;
pub mod refgen;
pub mod rl;
pub mod sim;
pub mod terrain;

pub use error::{Error, Result};
