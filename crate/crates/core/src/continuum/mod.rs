//! Continuous-time models of memory-based momentum.
//!
//! Heavy-ball, memory (MG) and Nesterov flows in phase space, with optional
//! constant volatility; the second-moment ODEs of the quadratic case; the Itô
//! isometry check; and the time change linking linear forgetting to
//! Nesterov's ODE.

mod grid;
mod ito;
mod sde;
mod variance;
mod warp;

use thiserror::Error;

use crate::memory::MemoryError;
use crate::problems::ProblemError;

pub use grid::TimeGrid;
pub use ito::{ito_isometry_mc, ito_isometry_mc_grid, ito_variance, IsometryEstimate};
pub use sde::{
    ensemble, integrate_trajectory, sde_step, semi_implicit_euler_step, velocity_samples,
    Coefficients, Dynamics, Path, PathStatus, PhaseState, Record, SdeSpec, Viscosity,
    DEFAULT_T_START,
};
pub use variance::{
    integrate_variance_ode, variance_ode_rhs, SecondMomentState, VarianceModel,
    CAUCHY_SCHWARZ_SLACK,
};
pub use warp::{time_warp_tau, warp_equivalence_check, warped_viscosity, WarpReport, WarpSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContinuumError {
    #[error("{0}")]
    Domain(String),
    #[error("state has dimension {got}, objective has dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("{0}")]
    Invariant(String),
    #[error("{what} diverged at t = {t}")]
    Diverged { what: &'static str, t: f64 },
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}
