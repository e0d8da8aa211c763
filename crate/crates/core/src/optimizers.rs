//! Discrete-time methods with configurable gradient forgetting.
//!
//! Every stepper is a pure function: it reads an [`OptimizerState`] and a
//! gradient vector and returns the next state with a [`StepReport`]. Gradient
//! sampling lives in [`crate::problems`]; nothing here owns an RNG.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::{MemoryError, MemoryOrder};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("gradient has dimension {got}, state has dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite gradient component at index {0}")]
    NonFiniteGradient(usize),
    #[error("iterate became non-finite at iteration {0}")]
    NonFiniteState(u64),
    #[error("{what} must satisfy {constraint}, got {value}")]
    Domain {
        what: &'static str,
        constraint: &'static str,
        value: f64,
    },
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

fn domain(what: &'static str, constraint: &'static str, value: f64) -> OptimError {
    OptimError::Domain {
        what,
        constraint,
        value,
    }
}

/// Iterate, previous iterate and moment buffers of a discrete method.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub x: Vec<f64>,
    /// `x_{k-1}`; equals `x` at `k = 0`.
    pub x_prev: Vec<f64>,
    /// Number of steps taken so far.
    pub k: u64,
    /// First-moment buffer.
    pub m1: Vec<f64>,
    /// Second-moment buffer, elementwise non-negative.
    pub m2: Vec<f64>,
    /// Total weight the method has put on past gradients (`Σⱼ w(j,k)`).
    pub weight_mass: f64,
}

impl OptimizerState {
    pub fn new(x0: Vec<f64>) -> Self {
        let d = x0.len();
        Self {
            x_prev: x0.clone(),
            x: x0,
            k: 0,
            m1: vec![0.0; d],
            m2: vec![0.0; d],
            weight_mass: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// `x_new − x_old`, exactly as applied.
    pub step_vector: Vec<f64>,
    pub grad_used: Vec<f64>,
    pub effective_weights_sum: f64,
}

impl StepReport {
    pub fn step_norm(&self) -> f64 {
        norm(&self.step_vector)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: OptimizerState,
    pub report: StepReport,
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_gradient(state: &OptimizerState, g: &[f64]) -> Result<(), OptimError> {
    if g.len() != state.dim() {
        return Err(OptimError::Dimension {
            expected: state.dim(),
            got: g.len(),
        });
    }
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(OptimError::NonFiniteGradient(i));
    }
    Ok(())
}

fn check_lr(lr: f64) -> Result<(), OptimError> {
    if lr.is_finite() && lr > 0.0 {
        Ok(())
    } else {
        Err(domain("step size", "lr > 0", lr))
    }
}

/// Builds the successor state from a new iterate and updated buffers.
fn advance(
    state: &OptimizerState,
    x_new: Vec<f64>,
    m1: Vec<f64>,
    m2: Vec<f64>,
    weight_mass: f64,
    g: &[f64],
) -> Result<Step, OptimError> {
    if x_new.iter().any(|v| !v.is_finite()) {
        return Err(OptimError::NonFiniteState(state.k + 1));
    }
    let step_vector = x_new.iter().zip(&state.x).map(|(a, b)| a - b).collect();
    Ok(Step {
        state: OptimizerState {
            x_prev: state.x.clone(),
            x: x_new,
            k: state.k + 1,
            m1,
            m2,
            weight_mass,
        },
        report: StepReport {
            step_vector,
            grad_used: g.to_vec(),
            effective_weights_sum: weight_mass,
        },
    })
}

/// `x' = x − η g`.
pub fn sgd_step(state: &OptimizerState, g: &[f64], lr: f64) -> Result<Step, OptimError> {
    check_gradient(state, g)?;
    check_lr(lr)?;
    let x_new = state.x.iter().zip(g).map(|(x, g)| x - lr * g).collect();
    advance(state, x_new, state.m1.clone(), state.m2.clone(), 1.0, g)
}

/// Heavy ball: `x' = x + β_k (x − x_prev) − η g`.
pub fn hb_step(state: &OptimizerState, g: &[f64], lr: f64, beta: f64) -> Result<Step, OptimError> {
    check_gradient(state, g)?;
    check_lr(lr)?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(domain("momentum beta", "0 <= beta <= 1", beta));
    }
    let x_new = state
        .x
        .iter()
        .zip(&state.x_prev)
        .zip(g)
        .map(|((x, xp), g)| x + beta * (x - xp) - lr * g)
        .collect();
    let mass = 1.0 + beta * state.weight_mass;
    advance(state, x_new, state.m1.clone(), state.m2.clone(), mass, g)
}

/// MemSGD-p: `x' = x + k/(k+p)(x − x_prev) − p/(k+p) η g`.
///
/// The stepsize condition `η ≤ (p−1)/(pL)` is the caller's to check; the
/// harness warns and records violations instead of refusing.
pub fn memsgd_p_step(
    state: &OptimizerState,
    g: &[f64],
    lr: f64,
    p: MemoryOrder,
) -> Result<Step, OptimError> {
    check_gradient(state, g)?;
    check_lr(lr)?;
    let momentum = p.momentum(state.k);
    let gain = p.fresh_weight(state.k) * lr;
    let x_new = state
        .x
        .iter()
        .zip(&state.x_prev)
        .zip(g)
        .map(|((x, xp), g)| x + momentum * (x - xp) - gain * g)
        .collect();
    advance(state, x_new, state.m1.clone(), state.m2.clone(), 1.0, g)
}

/// How [`unbiased_hb_step`] realizes the normalized heavy-ball sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnbiasedMode {
    /// Divide the exponential average by `1 − β^{k+1}` at every step.
    #[default]
    Exact,
    /// `x' = x + β(x − x_prev) − η(1−β) g`, the large-`k` limit.
    Asymptotic,
}

/// Heavy ball normalized so its gradient weights sum to one.
pub fn unbiased_hb_step(
    state: &OptimizerState,
    g: &[f64],
    lr: f64,
    beta: f64,
    mode: UnbiasedMode,
) -> Result<Step, OptimError> {
    check_gradient(state, g)?;
    check_lr(lr)?;
    if !(beta > 0.0 && beta < 1.0) {
        return Err(domain("momentum beta", "0 < beta < 1", beta));
    }
    let m1: Vec<f64> = state
        .m1
        .iter()
        .zip(g)
        .map(|(m, g)| beta * m + (1.0 - beta) * g)
        .collect();
    let (x_new, mass) = match mode {
        UnbiasedMode::Exact => {
            let scale = 1.0 / (1.0 - beta.powf(state.k as f64 + 1.0));
            let x = state.x.iter().zip(&m1).map(|(x, m)| x - lr * m * scale).collect();
            (x, 1.0)
        }
        UnbiasedMode::Asymptotic => {
            let x = state
                .x
                .iter()
                .zip(&state.x_prev)
                .zip(g)
                .map(|((x, xp), g)| x + beta * (x - xp) - lr * (1.0 - beta) * g)
                .collect();
            (x, 1.0 - beta.powf(state.k as f64 + 1.0))
        }
    };
    advance(state, x_new, m1, state.m2.clone(), mass, g)
}

/// Where the adaptive methods put their ε.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsPlacement {
    /// `m̂ / √(v̂ + ε)`.
    #[default]
    InsideRoot,
    /// `m̂ / (√v̂ + ε)`.
    OutsideRoot,
}

impl EpsPlacement {
    fn denominator(self, v: f64, eps: f64) -> f64 {
        match self {
            Self::InsideRoot => (v + eps).sqrt(),
            Self::OutsideRoot => v.sqrt() + eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub placement: EpsPlacement,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            placement: EpsPlacement::InsideRoot,
        }
    }
}

fn check_adam(beta1: f64, eps: f64) -> Result<(), OptimError> {
    if !(0.0..1.0).contains(&beta1) {
        return Err(domain("beta1", "0 <= beta1 < 1", beta1));
    }
    if !(eps > 0.0) {
        return Err(domain("epsilon", "eps > 0", eps));
    }
    Ok(())
}

/// Bias-corrected exponential first moment shared by the Adam family.
/// Returns the new buffer and `m̂`.
fn first_moment(state: &OptimizerState, g: &[f64], beta1: f64) -> (Vec<f64>, Vec<f64>) {
    let m1: Vec<f64> = state
        .m1
        .iter()
        .zip(g)
        .map(|(m, g)| beta1 * m + (1.0 - beta1) * g)
        .collect();
    let correction = 1.0 - beta1.powf(state.k as f64 + 1.0);
    let m_hat = m1.iter().map(|m| m / correction).collect();
    (m1, m_hat)
}

fn adaptive_update(
    state: &OptimizerState,
    lr: f64,
    m_hat: &[f64],
    v_hat: impl Iterator<Item = f64>,
    eps: f64,
    placement: EpsPlacement,
) -> Vec<f64> {
    state
        .x
        .iter()
        .zip(m_hat)
        .zip(v_hat)
        .map(|((x, m), v)| x - lr * m / placement.denominator(v, eps))
        .collect()
}

/// Adam with both bias corrections.
pub fn adam_step(state: &OptimizerState, g: &[f64], params: AdamParams) -> Result<Step, OptimError> {
    let AdamParams {
        lr,
        beta1,
        beta2,
        eps,
        placement,
    } = params;
    check_gradient(state, g)?;
    check_lr(lr)?;
    check_adam(beta1, eps)?;
    if !(0.0..1.0).contains(&beta2) {
        return Err(domain("beta2", "0 <= beta2 < 1", beta2));
    }
    let (m1, m_hat) = first_moment(state, g, beta1);
    let m2: Vec<f64> = state
        .m2
        .iter()
        .zip(g)
        .map(|(v, g)| beta2 * v + (1.0 - beta2) * g * g)
        .collect();
    let correction2 = 1.0 - beta2.powf(state.k as f64 + 1.0);
    let x_new = adaptive_update(
        state,
        lr,
        &m_hat,
        m2.iter().map(|v| v / correction2),
        eps,
        placement,
    );
    advance(state, x_new, m1, m2, 1.0, g)
}

/// Adagrad: accumulate `g∘g` forever, `x' = x − η g/√(m2 + ε)`.
pub fn adagrad_step(state: &OptimizerState, g: &[f64], lr: f64, eps: f64) -> Result<Step, OptimError> {
    check_gradient(state, g)?;
    check_lr(lr)?;
    if !(eps > 0.0) {
        return Err(domain("epsilon", "eps > 0", eps));
    }
    let m2: Vec<f64> = state.m2.iter().zip(g).map(|(v, g)| v + g * g).collect();
    let x_new = state
        .x
        .iter()
        .zip(g)
        .zip(&m2)
        .map(|((x, g), v)| x - lr * g / (v + eps).sqrt())
        .collect();
    advance(state, x_new, state.m1.clone(), m2, 1.0, g)
}

/// Adam with `β₂ = 1 − 1/n` at the `n`-th update (`n = k + 1`).
///
/// `v` is then the plain running mean of `g∘g` and needs no correction.
pub fn adamnc_step(
    state: &OptimizerState,
    g: &[f64],
    lr: f64,
    beta1: f64,
    eps: f64,
    placement: EpsPlacement,
) -> Result<Step, OptimError> {
    check_gradient(state, g)?;
    check_lr(lr)?;
    check_adam(beta1, eps)?;
    let n = state.k as f64 + 1.0;
    let beta2 = 1.0 - 1.0 / n;
    let (m1, m_hat) = first_moment(state, g, beta1);
    let m2: Vec<f64> = state
        .m2
        .iter()
        .zip(g)
        .map(|(v, g)| beta2 * v + g * g / n)
        .collect();
    let x_new = adaptive_update(state, lr, &m_hat, m2.iter().copied(), eps, placement);
    advance(state, x_new, m1, m2, 1.0, g)
}

/// Adam whose second moment is a polynomial-memory average of `g∘g`.
///
/// `v' = k/(k+p₂)·v + p₂/(k+p₂)·g∘g`, i.e. `v_k = Σⱼ w(j,k) gⱼ∘gⱼ` with the
/// MemSGD-p₂ weights. Those sum to one, so `v` is used uncorrected.
pub fn polyadam_step(
    state: &OptimizerState,
    g: &[f64],
    lr: f64,
    beta1: f64,
    p2: MemoryOrder,
    eps: f64,
    placement: EpsPlacement,
) -> Result<Step, OptimError> {
    check_gradient(state, g)?;
    check_lr(lr)?;
    check_adam(beta1, eps)?;
    let keep = p2.momentum(state.k);
    let fresh = p2.fresh_weight(state.k);
    let (m1, m_hat) = first_moment(state, g, beta1);
    let m2: Vec<f64> = state
        .m2
        .iter()
        .zip(g)
        .map(|(v, g)| keep * v + fresh * g * g)
        .collect();
    let x_new = adaptive_update(state, lr, &m_hat, m2.iter().copied(), eps, placement);
    advance(state, x_new, m1, m2, 1.0, g)
}

/// A discrete method with its hyperparameters, as named in configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    Sgd {
        lr: f64,
    },
    HeavyBall {
        lr: f64,
        beta: f64,
    },
    #[serde(rename = "memsgd")]
    MemSgd {
        lr: f64,
        p: MemoryOrder,
    },
    UnbiasedHb {
        lr: f64,
        beta: f64,
        #[serde(default)]
        mode: UnbiasedMode,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default)]
        placement: EpsPlacement,
    },
    Adagrad {
        lr: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    #[serde(rename = "adamnc")]
    AdamNc {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default)]
        placement: EpsPlacement,
    },
    #[serde(rename = "polyadam")]
    PolyAdam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        p2: MemoryOrder,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default)]
        placement: EpsPlacement,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl Method {
    pub fn lr(&self) -> f64 {
        match *self {
            Self::Sgd { lr }
            | Self::HeavyBall { lr, .. }
            | Self::MemSgd { lr, .. }
            | Self::UnbiasedHb { lr, .. }
            | Self::Adam { lr, .. }
            | Self::Adagrad { lr, .. }
            | Self::AdamNc { lr, .. }
            | Self::PolyAdam { lr, .. } => lr,
        }
    }

    /// Short stable name including the hyperparameters, e.g. `memsgd(p=2,lr=0.01)`.
    pub fn label(&self) -> String {
        match *self {
            Self::Sgd { lr } => format!("sgd(lr={lr})"),
            Self::HeavyBall { lr, beta } => format!("heavy_ball(beta={beta},lr={lr})"),
            Self::MemSgd { lr, p } => format!("memsgd(p={},lr={lr})", p.get()),
            Self::UnbiasedHb { lr, beta, mode } => {
                let mode = match mode {
                    UnbiasedMode::Exact => "exact",
                    UnbiasedMode::Asymptotic => "asymptotic",
                };
                format!("unbiased_hb(beta={beta},mode={mode},lr={lr})")
            }
            Self::Adam {
                lr, beta1, beta2, ..
            } => format!("adam(beta1={beta1},beta2={beta2},lr={lr})"),
            Self::Adagrad { lr, .. } => format!("adagrad(lr={lr})"),
            Self::AdamNc { lr, beta1, .. } => format!("adamnc(beta1={beta1},lr={lr})"),
            Self::PolyAdam { lr, beta1, p2, .. } => {
                format!("polyadam(beta1={beta1},p2={},lr={lr})", p2.get())
            }
        }
    }

    pub fn step(&self, state: &OptimizerState, g: &[f64]) -> Result<Step, OptimError> {
        match *self {
            Self::Sgd { lr } => sgd_step(state, g, lr),
            Self::HeavyBall { lr, beta } => hb_step(state, g, lr, beta),
            Self::MemSgd { lr, p } => memsgd_p_step(state, g, lr, p),
            Self::UnbiasedHb { lr, beta, mode } => unbiased_hb_step(state, g, lr, beta, mode),
            Self::Adam {
                lr,
                beta1,
                beta2,
                eps,
                placement,
            } => adam_step(
                state,
                g,
                AdamParams {
                    lr,
                    beta1,
                    beta2,
                    eps,
                    placement,
                },
            ),
            Self::Adagrad { lr, eps } => adagrad_step(state, g, lr, eps),
            Self::AdamNc {
                lr,
                beta1,
                eps,
                placement,
            } => adamnc_step(state, g, lr, beta1, eps, placement),
            Self::PolyAdam {
                lr,
                beta1,
                p2,
                eps,
                placement,
            } => polyadam_step(state, g, lr, beta1, p2, eps, placement),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run<F>(x0: Vec<f64>, steps: usize, mut grad: impl FnMut(usize, &[f64]) -> Vec<f64>, f: F) -> Vec<OptimizerState>
    where
        F: Fn(&OptimizerState, &[f64]) -> Result<Step, OptimError>,
    {
        let mut states = vec![OptimizerState::new(x0)];
        for i in 0..steps {
            let s = states.last().unwrap();
            let g = grad(i, &s.x);
            let next = f(s, &g).unwrap().state;
            states.push(next);
        }
        states
    }

    #[test]
    fn sgd_arithmetic() {
        let s = OptimizerState::new(vec![1.0, 1.0]);
        let out = sgd_step(&s, &[2.0, 1.0], 0.5).unwrap();
        assert_eq!(out.state.x, vec![0.0, 0.5]);
        assert_eq!(out.state.x_prev, vec![1.0, 1.0]);
        assert_eq!(out.state.k, 1);
        let out = sgd_step(&s, &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(out.state.x, s.x);
    }

    #[test]
    fn sgd_contracts_half_square_norm() {
        let states = run(vec![1.0], 10, |_, x| x.to_vec(), |s, g| sgd_step(s, g, 0.1));
        assert!((states[10].x[0] - 0.9f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn poisoned_gradients_are_rejected() {
        let s = OptimizerState::new(vec![0.0, 0.0]);
        assert_eq!(sgd_step(&s, &[f64::NAN, 0.0], 0.1), Err(OptimError::NonFiniteGradient(0)));
        assert!(matches!(sgd_step(&s, &[1.0], 0.1), Err(OptimError::Dimension { .. })));
        assert!(matches!(
            sgd_step(&s, &[1e308, 0.0], 1e10),
            Err(OptimError::NonFiniteState(1))
        ));
    }

    #[test]
    fn hb_with_zero_beta_is_sgd() {
        let grad = |i: usize, x: &[f64]| vec![x[0] * 0.3 + i as f64, -x[1]];
        let a = run(vec![1.0, -2.0], 20, grad, |s, g| hb_step(s, g, 0.05, 0.0));
        let b = run(vec![1.0, -2.0], 20, grad, |s, g| sgd_step(s, g, 0.05));
        for (a, b) in a.iter().zip(&b) {
            assert_eq!(a.x, b.x);
        }
    }

    #[test]
    fn first_steps_are_plain_gradient_steps() {
        let s = OptimizerState::new(vec![0.3, -1.0]);
        let g = [0.7, 0.2];
        let plain = sgd_step(&s, &g, 0.1).unwrap().state.x;
        assert_eq!(hb_step(&s, &g, 0.1, 0.9).unwrap().state.x, plain);
        let p = MemoryOrder::new(3.0).unwrap();
        assert_eq!(memsgd_p_step(&s, &g, 0.1, p).unwrap().state.x, plain);
        let exact = unbiased_hb_step(&s, &g, 0.1, 0.9, UnbiasedMode::Exact).unwrap();
        for (a, b) in exact.state.x.iter().zip(&plain) {
            assert!((a - b).abs() < 1e-16);
        }
    }

    #[test]
    fn memsgd_second_step_matches_weights() {
        let p = MemoryOrder::new(2.0).unwrap();
        let states = run(vec![0.0], 2, |_, _| vec![1.0], |s, g| memsgd_p_step(s, g, 1.0, p));
        let step = states[2].x[0] - states[1].x[0];
        assert!((step + 1.0).abs() < 1e-15);
    }

    #[test]
    fn memsgd_rejects_order_below_two() {
        assert!(MemoryOrder::new(1.5).is_err());
        let p = MemoryOrder::allow_below_two(1.5).unwrap();
        let s = OptimizerState::new(vec![1.0]);
        assert!(memsgd_p_step(&s, &[1.0], 0.1, p).is_ok());
    }

    #[test]
    fn unbiased_hb_constant_gradient() {
        let states = run(vec![0.0, 0.0], 30, |_, _| vec![2.0, -1.0], |s, g| {
            unbiased_hb_step(s, g, 0.1, 0.9, UnbiasedMode::Exact)
        });
        for w in states.windows(2) {
            assert!((w[1].x[0] - w[0].x[0] + 0.2).abs() < 1e-14);
            assert!((w[1].x[1] - w[0].x[1] - 0.1).abs() < 1e-14);
        }
    }

    #[test]
    fn unbiased_hb_modes_agree_late() {
        let grad = |i: usize, _: &[f64]| vec![(i as f64 * 0.37).sin()];
        let exact = run(vec![0.0], 400, grad, |s, g| {
            unbiased_hb_step(s, g, 0.1, 0.9, UnbiasedMode::Exact)
        });
        let asym = run(vec![0.0], 400, grad, |s, g| {
            unbiased_hb_step(s, g, 0.1, 0.9, UnbiasedMode::Asymptotic)
        });
        for k in 200..400 {
            let a = exact[k + 1].x[0] - exact[k].x[0];
            let b = asym[k + 1].x[0] - asym[k].x[0];
            assert!((a - b).abs() < 1e-6, "k={k}: {a} vs {b}");
        }
    }

    #[test]
    fn adam_zero_gradient_is_inert() {
        let s = OptimizerState::new(vec![1.0, 2.0]);
        let out = adam_step(&s, &[0.0, 0.0], AdamParams::default()).unwrap();
        assert_eq!(out.state.x, s.x);
        assert_eq!(out.state.m1, vec![0.0, 0.0]);
        assert_eq!(out.state.m2, vec![0.0, 0.0]);
    }

    #[test]
    fn adam_constant_gradient_moves_by_sign() {
        let params = AdamParams {
            lr: 0.01,
            eps: 1e-12,
            ..AdamParams::default()
        };
        let c = [3.0, -0.5];
        let mut s = OptimizerState::new(vec![0.0, 0.0]);
        for _ in 0..50 {
            let out = adam_step(&s, &c, params).unwrap();
            for (i, step) in out.report.step_vector.iter().enumerate() {
                let expected = -0.01 * c[i] / (c[i] * c[i] + 1e-12).sqrt();
                assert!((step - expected).abs() < 1e-14);
            }
            s = out.state;
        }
    }

    #[test]
    fn adam_memoryless_limit() {
        let params = AdamParams {
            lr: 0.1,
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e-16,
            placement: EpsPlacement::OutsideRoot,
        };
        let s = OptimizerState::new(vec![0.0, 0.0, 0.0]);
        let out = adam_step(&s, &[5.0, -0.01, 2.0], params).unwrap();
        for (step, sign) in out.report.step_vector.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((step - 0.1 * sign).abs() < 1e-12);
        }
    }

    #[test]
    fn adagrad_steps_decay() {
        let s = OptimizerState::new(vec![0.0]);
        let first = adagrad_step(&s, &[1.0], 0.1, 1e-8).unwrap();
        assert_eq!(first.report.step_vector[0], -0.1 / (1.0f64 + 1e-8).sqrt());
        assert_eq!(adagrad_step(&s, &[0.0], 0.1, 1e-8).unwrap().state.x, s.x);
        let mut s = first.state;
        for k in 2..=100u32 {
            let out = adagrad_step(&s, &[1.0], 0.1, 1e-8).unwrap();
            let expected = -0.1 / (f64::from(k) + 1e-8).sqrt();
            assert!((out.report.step_vector[0] - expected).abs() < 1e-15);
            s = out.state;
        }
    }

    #[test]
    fn adamnc_tracks_running_mean() {
        let gs = [1.0, -2.0, 0.5, 3.0, 1.5];
        let mut s = OptimizerState::new(vec![0.0]);
        let mut sum_sq = 0.0;
        for (i, g) in gs.iter().enumerate() {
            s = adamnc_step(&s, &[*g], 0.01, 0.9, 1e-8, EpsPlacement::InsideRoot)
                .unwrap()
                .state;
            sum_sq += g * g;
            assert!((s.m2[0] - sum_sq / (i + 1) as f64).abs() < 1e-14);
        }
        let s0 = OptimizerState::new(vec![1.0]);
        let out = adamnc_step(&s0, &[0.0], 0.01, 0.9, 1e-8, EpsPlacement::InsideRoot).unwrap();
        assert_eq!(out.state.x, s0.x);
        let out = adamnc_step(&s0, &[4.0], 0.01, 0.9, 1e-8, EpsPlacement::InsideRoot).unwrap();
        assert_eq!(out.state.m2[0], 16.0);
    }

    #[test]
    fn polyadam_normalized_average() {
        let p2 = MemoryOrder::new(2.0).unwrap();
        let mut s = OptimizerState::new(vec![0.0, 0.0]);
        for _ in 0..40 {
            let out = polyadam_step(&s, &[2.0, -3.0], 0.01, 0.9, p2, 1e-8, EpsPlacement::InsideRoot)
                .unwrap();
            s = out.state;
            assert!((s.m2[0] - 4.0).abs() < 1e-13 && (s.m2[1] - 9.0).abs() < 1e-13);
            let expected = -0.01 * 2.0 / (4.0f64 + 1e-8).sqrt();
            assert!((out.report.step_vector[0] - expected).abs() < 1e-14);
        }
        let p100 = MemoryOrder::new(100.0).unwrap();
        assert_eq!(p100.fresh_weight(100), 0.5);
    }

    #[test]
    fn method_labels_and_dispatch() {
        let m = Method::MemSgd {
            lr: 0.01,
            p: MemoryOrder::new(2.0).unwrap(),
        };
        assert_eq!(m.label(), "memsgd(p=2,lr=0.01)");
        let s = OptimizerState::new(vec![1.0]);
        assert_eq!(m.step(&s, &[1.0]).unwrap().state.x, vec![0.99]);
    }

    #[test]
    fn stepping_is_deterministic() {
        let methods = [
            Method::HeavyBall { lr: 0.1, beta: 0.9 },
            Method::Adam {
                lr: 0.1,
                beta1: 0.9,
                beta2: 0.99,
                eps: 1e-8,
                placement: EpsPlacement::InsideRoot,
            },
        ];
        let s = OptimizerState::new(vec![0.3, -0.7]);
        for m in methods {
            let a = m.step(&s, &[0.123, 4.56]).unwrap();
            let b = m.step(&s, &[0.123, 4.56]).unwrap();
            assert_eq!(a, b);
        }
    }
}
