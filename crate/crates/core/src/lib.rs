//! Multiband ranging from non-contiguous subbands measured by unsynchronized
//! subsystems: simulation, sparse recovery, offset compensation, fusion and
//! evaluation.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod baselines;
pub mod coherence;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod pipeline;
pub mod sparse;
pub mod spectrum;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
