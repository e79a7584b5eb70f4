//! Compact depth networks and knowledge distillation with auxiliary data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod distill;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod nn;

pub use error::{Error, Result};
