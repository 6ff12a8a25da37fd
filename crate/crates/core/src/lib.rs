//! Optimal (s,S)-type ordering policies for diffusion inventory models with
//! random yields under the long-run average cost criterion.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod conditions;
pub mod diffusion;
pub mod error;
pub mod functionals;
pub mod numerics;
pub mod optimizer;
pub mod presets;
pub mod simulator;
pub mod problem;
pub mod yields;

pub use error::{Error, Result};
