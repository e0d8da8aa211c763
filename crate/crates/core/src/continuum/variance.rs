//! Second moments of a one-dimensional linear SDE in closed ODE form.
//!
//! For `f(x) = λx²/2` with constant volatility the uncentered moments
//! `p1 = E[X²]`, `p2 = E[XV]`, `p3 = E[V²]` solve a linear ODE. Two models:
//!
//! * Nesterov, `dV = −(3/t)V dt − λX dt − σ dB`:
//!   `ṗ1 = 2p2`, `ṗ2 = −λp1 − (3/t)p2 + p3`, `ṗ3 = −2λp2 − (6/t)p3 + σ²`.
//! * quadratic forgetting `m = t³`, `dV = −(3/t)[V dt + λX dt + σ dB]`:
//!   `ṗ1 = 2p2`, `ṗ2 = −(3λ/t)p1 − (3/t)p2 + p3`,
//!   `ṗ3 = −(6λ/t)p2 − (6/t)p3 + 9σ²/t²`.
//!
//! The noise term of the second system is the squared diffusion coefficient
//! `(3σ/t)²` from Itô's formula.

use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use super::ContinuumError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceModel {
    Nesterov,
    QuadraticForgetting,
}

impl VarianceModel {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Nesterov => "nesterov",
            Self::QuadraticForgetting => "quadratic_forgetting",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentState {
    pub t: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

/// Slack allowed in `p2² ≤ p1·p3` for integration error.
pub const CAUCHY_SCHWARZ_SLACK: f64 = 1e-9;

impl SecondMomentState {
    /// `X = 1`, `V = 0` almost surely.
    pub fn initial(t: f64) -> Self {
        Self {
            t,
            p1: 1.0,
            p2: 0.0,
            p3: 0.0,
        }
    }

    pub fn is_admissible(&self) -> bool {
        let tol = CAUCHY_SCHWARZ_SLACK * (1.0 + self.p1 * self.p3);
        self.p1 >= -tol && self.p3 >= -tol && self.p2 * self.p2 <= self.p1 * self.p3 + tol
    }
}

/// `(ṗ1, ṗ2, ṗ3)` at `s.t`.
pub fn variance_ode_rhs(
    model: VarianceModel,
    s: &SecondMomentState,
    lambda: f64,
    sigma2: f64,
) -> Result<[f64; 3], ContinuumError> {
    let t = s.t;
    if !(t > 0.0) {
        return Err(ContinuumError::Domain(format!("variance ODE needs t > 0, got {t}")));
    }
    Ok(rhs(model, t, [s.p1, s.p2, s.p3], lambda, sigma2))
}

fn rhs(model: VarianceModel, t: f64, p: [f64; 3], lambda: f64, sigma2: f64) -> [f64; 3] {
    let [p1, p2, p3] = p;
    match model {
        VarianceModel::Nesterov => [
            2.0 * p2,
            -lambda * p1 - 3.0 / t * p2 + p3,
            -2.0 * lambda * p2 - 6.0 / t * p3 + sigma2,
        ],
        VarianceModel::QuadraticForgetting => [
            2.0 * p2,
            -3.0 * lambda / t * p1 - 3.0 / t * p2 + p3,
            -6.0 * lambda / t * p2 - 6.0 / t * p3 + 9.0 * sigma2 / (t * t),
        ],
    }
}

fn rk4(model: VarianceModel, s: &SecondMomentState, dt: f64, lambda: f64, sigma2: f64) -> SecondMomentState {
    let p = [s.p1, s.p2, s.p3];
    let add = |a: [f64; 3], k: [f64; 3], c: f64| [a[0] + c * k[0], a[1] + c * k[1], a[2] + c * k[2]];
    let k1 = rhs(model, s.t, p, lambda, sigma2);
    let k2 = rhs(model, s.t + dt / 2.0, add(p, k1, dt / 2.0), lambda, sigma2);
    let k3 = rhs(model, s.t + dt / 2.0, add(p, k2, dt / 2.0), lambda, sigma2);
    let k4 = rhs(model, s.t + dt, add(p, k3, dt), lambda, sigma2);
    let q: Vec<f64> = (0..3)
        .map(|i| p[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    SecondMomentState {
        t: s.t + dt,
        p1: q[0],
        p2: q[1],
        p3: q[2],
    }
}

/// One macro step, split in halves up to `depth` times while the result
/// violates Cauchy–Schwarz.
fn guarded_step(
    model: VarianceModel,
    s: &SecondMomentState,
    dt: f64,
    lambda: f64,
    sigma2: f64,
    depth: u32,
) -> Result<SecondMomentState, ContinuumError> {
    let next = rk4(model, s, dt, lambda, sigma2);
    if next.is_admissible() {
        return Ok(next);
    }
    if depth == 0 {
        return Err(ContinuumError::Invariant(format!(
            "second moments violate Cauchy-Schwarz at t = {} even after 10 step halvings",
            next.t
        )));
    }
    let mid = guarded_step(model, s, dt / 2.0, lambda, sigma2, depth - 1)?;
    guarded_step(model, &mid, dt / 2.0, lambda, sigma2, depth - 1)
}

/// Classical fixed-step RK4 from `(1, 0, 0)` at `t0` to `t_end`, on the same
/// warm-up grid the trajectory integrator uses. Returns the state at every
/// grid point that is nearest to one of `sample_times`, or every `stride`-th
/// point when `sample_times` is empty.
pub fn integrate_variance_ode(
    model: VarianceModel,
    t0: f64,
    t_end: f64,
    h: f64,
    lambda: f64,
    sigma2: f64,
    sample_times: &[f64],
    stride: usize,
) -> Result<Vec<SecondMomentState>, ContinuumError> {
    if !(t0 > 0.0) {
        return Err(ContinuumError::Domain(format!("variance ODE needs t0 > 0, got {t0}")));
    }
    if !(sigma2 >= 0.0) {
        return Err(ContinuumError::Domain(format!("sigma² must be >= 0, got {sigma2}")));
    }
    let grid = TimeGrid::new(t0, t_end, h, 6.0)?;
    let mut s = SecondMomentState::initial(t0);
    let mut out = Vec::new();
    let mut next_target = 0;
    while next_target < sample_times.len() && sample_times[next_target] <= t0 {
        out.push(s);
        next_target += 1;
    }
    if sample_times.is_empty() {
        out.push(s);
    }
    let mut times = grid.iter();
    times.next();
    for (i, t_next) in times.enumerate() {
        let mut new = guarded_step(model, &s, t_next - s.t, lambda, sigma2, 10)?;
        new.t = t_next;
        while next_target < sample_times.len() && sample_times[next_target] <= t_next {
            let tgt = sample_times[next_target];
            out.push(if tgt - s.t < t_next - tgt { s } else { new });
            next_target += 1;
        }
        s = new;
        if sample_times.is_empty() && (i + 1) % stride.max(1) == 0 {
            out.push(s);
        }
    }
    if sample_times.is_empty() && out.last().map(|l| l.t) != Some(s.t) {
        out.push(s);
    }
    Ok(out)
}
