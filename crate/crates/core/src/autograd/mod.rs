//! Reverse-mode automatic differentiation.

pub mod check;
pub(crate) mod kernels;
mod ops;
mod tape;

pub use ops::concat;
pub use tape::{Gradients, Tape, Var};
