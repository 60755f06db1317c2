//! Reverse-mode differentiation over dense matrices, Adam, and a finite-difference oracle.

mod adam;
mod gradcheck;
mod params;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use params::{ParamSet, ParamVars};
pub use tape::{softmax_rows, Gradients, Tape, Var};
