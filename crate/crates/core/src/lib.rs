//! Memory-based momentum for gradient methods.
//!
//! Optimizers whose momentum forgets past gradients according to a memory
//! function `m(t)`, the ODE/SDE models they discretize, and closed-form rate
//! bounds to check simulations against.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuum;
pub mod harness;
pub mod memory;
pub mod optimizers;
pub mod problems;
pub mod quad;
pub mod stats;
pub mod theory;

pub use memory::{MemoryError, MemoryFunction, MemoryOrder};
pub use optimizers::{Method, OptimError, OptimizerState};
pub use problems::{NoiseModel, Objective, ProblemSpec};
