//! Memory functions and the gradient weights they induce.
//!
//! A memory function `m` is non-negative, strictly increasing and vanishes at
//! zero. Its derivative weighs past gradients: the continuous update direction
//! is `-∫₀ᵗ ṁ(s)/m(t) ∇f(X(s)) ds`, and because `m(0) = 0` those weights always
//! integrate to one. The discrete counterparts are the MemSGD-p weights
//! (polynomial forgetting) and the geometric heavy-ball weights, optionally
//! bias-corrected the way Adam normalizes its first moment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("instantaneous forgetting has no memory function")]
    Instantaneous,
    #[error("{what} must satisfy {constraint}, got {value}")]
    Domain {
        what: &'static str,
        constraint: &'static str,
        value: f64,
    },
}

fn domain(what: &'static str, constraint: &'static str, value: f64) -> MemoryError {
    MemoryError::Domain {
        what,
        constraint,
        value,
    }
}

/// A forgetting law.
///
/// `Polynomial(p)` is `t^p`; the named polynomial laws are aliases built by
/// [`MemoryFunction::constant`], [`MemoryFunction::square_root`],
/// [`MemoryFunction::linear`] and [`MemoryFunction::quadratic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemoryFunction {
    /// `log(1 + t)`.
    Decaying,
    /// `t^p`.
    Polynomial { p: f64 },
    /// `e^{αt} − 1`.
    Exponential { alpha: f64 },
    /// `e^{t^α} − 1`.
    SuperExponential { alpha: f64 },
    /// Gradient flow: all mass on the current gradient. Has no `m(t)`.
    Instantaneous,
}

impl MemoryFunction {
    /// `m(t) = t`, forgets nothing.
    pub fn constant() -> Self {
        Self::Polynomial { p: 1.0 }
    }

    pub fn square_root() -> Self {
        Self::Polynomial { p: 1.5 }
    }

    /// `m(t) = t²`, past gradients are forgotten linearly.
    pub fn linear() -> Self {
        Self::Polynomial { p: 2.0 }
    }

    /// `m(t) = t³`, past gradients are forgotten quadratically.
    pub fn quadratic() -> Self {
        Self::Polynomial { p: 3.0 }
    }

    pub fn polynomial(p: f64) -> Result<Self, MemoryError> {
        let mf = Self::Polynomial { p };
        mf.validate()?;
        Ok(mf)
    }

    pub fn exponential(alpha: f64) -> Result<Self, MemoryError> {
        let mf = Self::Exponential { alpha };
        mf.validate()?;
        Ok(mf)
    }

    pub fn super_exponential(alpha: f64) -> Result<Self, MemoryError> {
        let mf = Self::SuperExponential { alpha };
        mf.validate()?;
        Ok(mf)
    }

    /// Checks the shape parameter. Deserialized values bypass the
    /// constructors, so consumers call this once before use.
    pub fn validate(&self) -> Result<(), MemoryError> {
        match *self {
            Self::Polynomial { p } if !(p.is_finite() && p > 0.0) => {
                Err(domain("polynomial degree p", "p > 0", p))
            }
            Self::Exponential { alpha } | Self::SuperExponential { alpha }
                if !(alpha.is_finite() && alpha > 0.0) =>
            {
                Err(domain("rate alpha", "alpha > 0", alpha))
            }
            _ => Ok(()),
        }
    }

    /// `m(t)`.
    pub fn value(&self, t: f64) -> Result<f64, MemoryError> {
        check_time(t)?;
        Ok(match *self {
            Self::Decaying => t.ln_1p(),
            Self::Polynomial { p } => t.powf(p),
            Self::Exponential { alpha } => (alpha * t).exp_m1(),
            Self::SuperExponential { alpha } => t.powf(alpha).exp_m1(),
            Self::Instantaneous => return Err(MemoryError::Instantaneous),
        })
    }

    /// `ṁ(t)`.
    pub fn derivative(&self, t: f64) -> Result<f64, MemoryError> {
        check_time(t)?;
        Ok(match *self {
            Self::Decaying => 1.0 / (1.0 + t),
            Self::Polynomial { p } => p * t.powf(p - 1.0),
            Self::Exponential { alpha } => alpha * (alpha * t).exp(),
            Self::SuperExponential { alpha } => alpha * t.powf(alpha - 1.0) * t.powf(alpha).exp(),
            Self::Instantaneous => return Err(MemoryError::Instantaneous),
        })
    }

    /// `ṁ(t)/m(t)`, the viscosity and gradient coefficient of the memory ODE.
    ///
    /// Evaluated in a form that stays finite when `m` itself overflows.
    pub fn ode_coefficient(&self, t: f64) -> Result<f64, MemoryError> {
        if !(t > 0.0) {
            return Err(domain("time t", "t > 0", t));
        }
        Ok(match *self {
            Self::Decaying => 1.0 / ((1.0 + t) * t.ln_1p()),
            Self::Polynomial { p } => p / t,
            Self::Exponential { alpha } => alpha / -(-alpha * t).exp_m1(),
            Self::SuperExponential { alpha } => {
                alpha * t.powf(alpha - 1.0) / -(-t.powf(alpha)).exp_m1()
            }
            Self::Instantaneous => return Err(MemoryError::Instantaneous),
        })
    }

    /// `w(s, t) = ṁ(s)/m(t)` for `0 ≤ s ≤ t`, `t > 0`.
    pub fn continuous_weight(&self, s: f64, t: f64) -> Result<f64, MemoryError> {
        if !(t > 0.0) {
            return Err(domain("time t", "t > 0", t));
        }
        if !(0.0..=t).contains(&s) {
            return Err(domain("past time s", "0 <= s <= t", s));
        }
        Ok(match *self {
            Self::Decaying => 1.0 / ((1.0 + s) * t.ln_1p()),
            Self::Polynomial { p } => p / t * (s / t).powf(p - 1.0),
            Self::Exponential { alpha } => {
                alpha * (alpha * (s - t)).exp() / -(-alpha * t).exp_m1()
            }
            Self::SuperExponential { alpha } => {
                let (sa, ta) = (s.powf(alpha), t.powf(alpha));
                alpha * s.powf(alpha - 1.0) * (sa - ta).exp() / -(-ta).exp_m1()
            }
            Self::Instantaneous => return Err(MemoryError::Instantaneous),
        })
    }
}

fn check_time(t: f64) -> Result<(), MemoryError> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(domain("time t", "t >= 0", t))
    }
}

/// Degree `p` of polynomial forgetting in discrete time (MemSGD-p).
///
/// The discrete rate guarantee needs `p ≥ 2`. Orders in `(1, 2)` are only
/// reachable through [`MemoryOrder::allow_below_two`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MemoryOrder(f64);

impl MemoryOrder {
    pub fn new(p: f64) -> Result<Self, MemoryError> {
        if p.is_finite() && p >= 2.0 {
            Ok(Self(p))
        } else {
            Err(domain("memory order p", "p >= 2", p))
        }
    }

    /// Accepts `p > 1`. The rate bound does not cover `p < 2`.
    pub fn allow_below_two(p: f64) -> Result<Self, MemoryError> {
        if p.is_finite() && p > 1.0 {
            Ok(Self(p))
        } else {
            Err(domain("memory order p", "p > 1", p))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Momentum coefficient `k/(k+p)` used at iteration `k`.
    pub fn momentum(self, k: u64) -> f64 {
        let k = k as f64;
        k / (k + self.0)
    }

    /// Weight `p/(k+p)` of the freshest gradient at iteration `k`.
    pub fn fresh_weight(self, k: u64) -> f64 {
        self.0 / (k as f64 + self.0)
    }
}

impl TryFrom<f64> for MemoryOrder {
    type Error = MemoryError;

    /// Deserialization path: lenient, `p > 1`. Callers that need the strict
    /// guarantee re-check with [`MemoryOrder::new`].
    fn try_from(p: f64) -> Result<Self, Self::Error> {
        Self::allow_below_two(p)
    }
}

impl From<MemoryOrder> for f64 {
    fn from(p: MemoryOrder) -> f64 {
        p.0
    }
}

/// Weights `w(0..=k, k)` such that the MemSGD-p step at iteration `k` is
/// `x_{k+1} − x_k = −η Σⱼ w(j,k) ∇f(xⱼ)`.
///
/// `w(k,k) = p/(k+p)` and `w(j−1,k) = w(j,k)·j/(j+p−1)`, which for integer `p`
/// telescopes to `p·(j+1)⋯(j+p−1) / ((k+1)⋯(k+p))`. The ratio form is also the
/// product `∏_{h=j+1}^{k} h/(h+p) · p/(j+p)` for real `p`.
pub fn discrete_weights_memsgd(p: MemoryOrder, k: usize) -> Vec<f64> {
    let p = p.get();
    let mut w = vec![0.0; k + 1];
    w[k] = p / (k as f64 + p);
    for j in (1..=k).rev() {
        let jf = j as f64;
        w[j - 1] = w[j] * jf / (jf + p - 1.0);
    }
    w
}

/// Heavy-ball weights `β^{k−j}`, optionally normalized to sum to one.
pub fn discrete_weights_hb(
    beta: f64,
    k: usize,
    bias_corrected: bool,
) -> Result<Vec<f64>, MemoryError> {
    check_beta(beta)?;
    let scale = if bias_corrected {
        bias_correction_factor(beta, k as u64)?
    } else {
        1.0
    };
    Ok((0..=k)
        .map(|j| scale * beta.powi((k - j) as i32))
        .collect())
}

/// `(1−β)/(1−β^{k+1})`: the reciprocal of `Σⱼ β^{k−j}`.
///
/// Once `β^{k+1}` drops below `1e-300` the factor is clamped to `1−β`.
pub fn bias_correction_factor(beta: f64, k: u64) -> Result<f64, MemoryError> {
    check_beta(beta)?;
    if beta == 0.0 {
        return Ok(1.0);
    }
    let pow = beta.powf(k as f64 + 1.0);
    if pow < 1e-300 {
        return Ok(1.0 - beta);
    }
    Ok((1.0 - beta) / (1.0 - pow))
}

fn check_beta(beta: f64) -> Result<(), MemoryError> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(domain("momentum beta", "0 <= beta < 1", beta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn table_values() {
        assert_eq!(MemoryFunction::quadratic().value(0.0).unwrap(), 0.0);
        let e = MemoryFunction::exponential(1.0).unwrap();
        assert!(close(e.value(2f64.ln()).unwrap(), 1.0, 1e-15));
        let d = MemoryFunction::Decaying;
        assert!(close(d.value(std::f64::consts::E - 1.0).unwrap(), 1.0, 1e-15));
    }

    #[test]
    fn instantaneous_is_rejected() {
        let inst = MemoryFunction::Instantaneous;
        assert_eq!(inst.value(1.0), Err(MemoryError::Instantaneous));
        assert_eq!(inst.ode_coefficient(1.0), Err(MemoryError::Instantaneous));
        assert_eq!(inst.continuous_weight(0.5, 1.0), Err(MemoryError::Instantaneous));
    }

    #[test]
    fn ode_coefficients() {
        assert_eq!(MemoryFunction::quadratic().ode_coefficient(1.0).unwrap(), 3.0);
        for p in [1.0, 1.5, 2.0, 7.25] {
            let mf = MemoryFunction::polynomial(p).unwrap();
            assert!(close(mf.ode_coefficient(p).unwrap(), 1.0, 1e-15));
        }
        // 10 e^{100} / (e^{100} − 1), which is 10 to within 1e-42 relative.
        let e = MemoryFunction::exponential(10.0).unwrap();
        assert!(close(e.ode_coefficient(10.0).unwrap(), 10.0, 1e-12));
    }

    #[test]
    fn ode_coefficient_matches_ratio() {
        let kinds = [
            MemoryFunction::Decaying,
            MemoryFunction::square_root(),
            MemoryFunction::quadratic(),
            MemoryFunction::exponential(0.7).unwrap(),
            MemoryFunction::super_exponential(1.5).unwrap(),
            MemoryFunction::super_exponential(0.5).unwrap(),
        ];
        for mf in kinds {
            for t in [1e-3, 0.1, 0.9, 3.0, 12.0] {
                let ratio = mf.derivative(t).unwrap() / mf.value(t).unwrap();
                let coef = mf.ode_coefficient(t).unwrap();
                assert!(close(coef, ratio, 1e-12), "{mf:?} t={t}: {coef} vs {ratio}");
            }
        }
    }

    #[test]
    fn weights_at_endpoints() {
        let q = MemoryFunction::quadratic();
        for t in [0.5, 2.0, 9.0] {
            assert!(close(q.continuous_weight(t, t).unwrap(), 3.0 / t, 1e-15));
        }
        let lin = MemoryFunction::linear();
        assert!(close(lin.continuous_weight(1.0, 2.0).unwrap(), 0.5, 1e-15));
        let alpha = 2.0;
        let e = MemoryFunction::exponential(alpha).unwrap();
        for t in [0.1, 1.0, 5.0] {
            let expected = alpha / (alpha * t).exp_m1();
            assert!(close(e.continuous_weight(0.0, t).unwrap(), expected, 1e-13));
        }
        assert!(q.continuous_weight(2.0, 1.0).is_err());
        assert!(q.continuous_weight(0.0, 0.0).is_err());
    }

    #[test]
    fn huge_exponents_stay_finite() {
        let e = MemoryFunction::exponential(10.0).unwrap();
        let w = e.continuous_weight(99.0, 100.0).unwrap();
        assert!(close(w, 10.0 * (-10.0f64).exp(), 1e-12));
        let s = MemoryFunction::super_exponential(2.0).unwrap();
        assert!(s.ode_coefficient(100.0).unwrap().is_finite());
        assert!(s.continuous_weight(100.0, 100.0).unwrap().is_finite());
    }

    #[test]
    fn memsgd_small_cases() {
        let p2 = MemoryOrder::new(2.0).unwrap();
        assert_eq!(discrete_weights_memsgd(p2, 0), vec![1.0]);
        let w = discrete_weights_memsgd(p2, 1);
        assert!(close(w[0], 1.0 / 3.0, 1e-15) && close(w[1], 2.0 / 3.0, 1e-15));
    }

    #[test]
    fn memory_order_gate() {
        assert!(MemoryOrder::new(1.5).is_err());
        assert!(MemoryOrder::new(f64::NAN).is_err());
        assert_eq!(MemoryOrder::allow_below_two(1.5).unwrap().get(), 1.5);
        assert!(MemoryOrder::allow_below_two(1.0).is_err());
    }

    #[test]
    fn hb_weights() {
        let w = discrete_weights_hb(0.9, 2, false).unwrap();
        assert_eq!(w, vec![0.9f64.powi(2), 0.9, 1.0]);
        let w = discrete_weights_hb(0.9, 2, true).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in [0, 1, 5, 40] {
            let w = discrete_weights_hb(0.0, k, true).unwrap();
            assert_eq!(w[k], 1.0);
            assert!(w[..k].iter().all(|&x| x == 0.0));
        }
        assert!(discrete_weights_hb(1.0, 3, true).is_err());
    }

    #[test]
    fn bias_correction() {
        assert_eq!(bias_correction_factor(0.9, 0).unwrap(), 1.0);
        assert!(close(bias_correction_factor(0.5, 1).unwrap(), 2.0 / 3.0, 1e-15));
        assert!(close(bias_correction_factor(0.9, 10_000).unwrap(), 0.1, 1e-15));
        // β^{k+1} underflows long before k = u64::MAX.
        assert_eq!(bias_correction_factor(0.9, u64::MAX / 2).unwrap(), 1.0 - 0.9);
    }
}
