//! Test objectives with exact constants and pluggable gradient noise.

mod logistic;
mod noise;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use logistic::{LogisticRegression, LABEL_NOISE};
pub use noise::{
    empirical_covariance, noise_level_estimate, stochastic_gradient, volatility_from_covariance,
    NoiseModel, Volatility,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("{0}")]
    Invalid(String),
    #[error("noise model {noise} needs a finite-sum objective, {objective} is not one")]
    NotFiniteSum { noise: &'static str, objective: String },
    #[error("volatility has dimension {got}, objective has dimension {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Known constants of an objective. Absent entries are unknown or undefined.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub f_star: Option<f64>,
    pub x_star: Option<Vec<f64>>,
    /// Gradient Lipschitz constant, possibly only valid on `domain_box`.
    pub lipschitz: Option<f64>,
    /// Quadratic-growth / strong-convexity modulus.
    pub mu: Option<f64>,
    /// Weak-quasi-convexity constant, `1` for convex objectives.
    pub tau: Option<f64>,
    /// Box `[lo, hi]^d` outside of which `lipschitz` is not guaranteed.
    pub domain_box: Option<(f64, f64)>,
}

/// A differentiable cost with an exact gradient oracle.
pub trait Objective: fmt::Debug + Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn constants(&self) -> &Constants;

    /// Component access for minibatch sampling, when the objective is a mean
    /// of `n` terms.
    fn as_finite_sum(&self) -> Option<&dyn FiniteSum> {
        None
    }
}

/// `f = (1/n) Σᵢ fᵢ`.
pub trait FiniteSum {
    fn n_components(&self) -> usize;
    fn component_gradient(&self, i: usize, x: &[f64]) -> Vec<f64>;
}

/// `f(x) = Σᵢ cᵢ xᵢ²`.
#[derive(Debug, Clone)]
pub struct QuadraticDiag {
    coeffs: Vec<f64>,
    constants: Constants,
}

impl QuadraticDiag {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, ProblemError> {
        if coeffs.is_empty() {
            return Err(ProblemError::Invalid("quadratic needs at least one coefficient".into()));
        }
        if let Some(c) = coeffs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(ProblemError::Invalid(format!(
                "quadratic coefficients must be finite and non-negative, got {c}"
            )));
        }
        let max = coeffs.iter().cloned().fold(0.0, f64::max);
        let min = coeffs.iter().cloned().fold(f64::INFINITY, f64::min);
        let constants = Constants {
            f_star: Some(0.0),
            x_star: Some(vec![0.0; coeffs.len()]),
            lipschitz: Some(2.0 * max),
            mu: Some(2.0 * min),
            tau: Some(1.0),
            domain_box: None,
        };
        Ok(Self { coeffs, constants })
    }

    /// `½‖x‖²` in `d` dimensions.
    pub fn half_norm(d: usize) -> Self {
        Self::new(vec![0.5; d]).expect("positive coefficients")
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

impl Objective for QuadraticDiag {
    fn name(&self) -> String {
        format!("quadratic_diag{:?}", self.coeffs)
    }

    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(c, x)| c * x * x).sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.coeffs.iter().zip(x).map(|(c, x)| 2.0 * c * x).collect()
    }

    fn constants(&self) -> &Constants {
        &self.constants
    }
}

/// `f(x₁, x₂) = 0.8 x₁⁴ + 0.4 x₂⁴`.
///
/// Convex with minimizer at the origin but no global gradient Lipschitz
/// constant; the declared `L = 38.4` is the largest Hessian entry on `[−2, 2]²`.
#[derive(Debug, Clone)]
pub struct Quartic2d {
    constants: Constants,
}

impl Quartic2d {
    pub const BOX: (f64, f64) = (-2.0, 2.0);

    pub fn new() -> Self {
        Self {
            constants: Constants {
                f_star: Some(0.0),
                x_star: Some(vec![0.0, 0.0]),
                // 9.6·x₁² at the box edge
                lipschitz: Some(38.4),
                mu: None,
                tau: Some(1.0),
                domain_box: Some(Self::BOX),
            },
        }
    }
}

impl Default for Quartic2d {
    fn default() -> Self {
        Self::new()
    }
}

impl Objective for Quartic2d {
    fn name(&self) -> String {
        "quartic_2d".into()
    }

    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (a, b) = (x[0] * x[0], x[1] * x[1]);
        0.8 * a * a + 0.4 * b * b
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![3.2 * x[0] * x[0] * x[0], 1.6 * x[1] * x[1] * x[1]]
    }

    fn constants(&self) -> &Constants {
        &self.constants
    }
}

/// The linear cost `⟨c, x⟩`, whose gradient is `c` everywhere. Unbounded
/// below, so no `f*`.
#[derive(Debug, Clone)]
pub struct ConstantField {
    c: Vec<f64>,
    constants: Constants,
}

impl ConstantField {
    pub fn new(c: Vec<f64>) -> Self {
        let zero = c.iter().all(|v| *v == 0.0);
        let constants = Constants {
            lipschitz: Some(0.0),
            f_star: zero.then_some(0.0),
            ..Constants::default()
        };
        Self { c, constants }
    }
}

impl Objective for ConstantField {
    fn name(&self) -> String {
        format!("constant_field{:?}", self.c)
    }

    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    fn gradient(&self, _x: &[f64]) -> Vec<f64> {
        self.c.clone()
    }

    fn constants(&self) -> &Constants {
        &self.constants
    }
}

/// Objective selection as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    QuadraticDiag {
        coeffs: Vec<f64>,
    },
    /// `½‖x‖²` in `dim` dimensions.
    HalfNorm {
        dim: usize,
    },
    #[serde(rename = "quartic_2d")]
    Quartic2d,
    ConstantField {
        c: Vec<f64>,
    },
    Logistic {
        n: usize,
        dim: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
}

fn default_lambda() -> f64 {
    1e-3
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Arc<dyn Objective>, ProblemError> {
        Ok(match self {
            Self::QuadraticDiag { coeffs } => Arc::new(QuadraticDiag::new(coeffs.clone())?),
            Self::HalfNorm { dim } => {
                if *dim == 0 {
                    return Err(ProblemError::Invalid("dim must be at least 1".into()));
                }
                Arc::new(QuadraticDiag::half_norm(*dim))
            }
            Self::Quartic2d => Arc::new(Quartic2d::new()),
            Self::ConstantField { c } => Arc::new(ConstantField::new(c.clone())),
            Self::Logistic {
                n,
                dim,
                seed,
                lambda,
            } => Arc::new(LogisticRegression::synthetic(*n, *dim, *seed, *lambda)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_constants() {
        let q = QuadraticDiag::new(vec![2e-2, 5e-3]).unwrap();
        let c = q.constants();
        assert_eq!(c.lipschitz, Some(4e-2));
        assert_eq!(c.mu, Some(1e-2));
        assert!((q.value(&[1.0, 1.0]) - 0.025).abs() < 1e-17);
        assert_eq!(q.gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
        let h = QuadraticDiag::half_norm(3);
        assert_eq!(h.gradient(&[1.0, -2.0, 0.5]), vec![1.0, -2.0, 0.5]);
        assert!(QuadraticDiag::new(vec![1.0, -0.1]).is_err());
    }

    #[test]
    fn quartic_values() {
        let q = Quartic2d::new();
        assert!((q.value(&[1.0, 1.0]) - 1.2).abs() < 1e-15);
        assert_eq!(q.gradient(&[1.0, 1.0]), vec![3.2, 1.6]);
        assert_eq!(q.gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(q.constants().lipschitz, Some(38.4));
    }

    #[test]
    fn constant_field() {
        let f = ConstantField::new(vec![1.0]);
        assert_eq!(f.gradient(&[123.0]), vec![1.0]);
        assert_eq!(f.constants().f_star, None);
        let f = ConstantField::new(vec![1.0, -2.0]);
        let (x, y) = ([0.5, 3.0], [-1.0, 1.0]);
        assert_eq!(f.value(&x) - f.value(&y), 1.5 - 4.0);
    }

    #[test]
    fn secant_check_for_declared_lipschitz() {
        let objectives: Vec<Box<dyn Objective>> = vec![
            Box::new(QuadraticDiag::new(vec![2e-2, 5e-3]).unwrap()),
            Box::new(Quartic2d::new()),
            Box::new(LogisticRegression::synthetic(50, 3, 1, 1e-2).unwrap()),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for obj in objectives {
            let l = obj.constants().lipschitz.unwrap();
            let (lo, hi) = obj.constants().domain_box.unwrap_or((-5.0, 5.0));
            for _ in 0..1000 {
                let x: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(lo..hi)).collect();
                let y: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(lo..hi)).collect();
                let gd: f64 = obj
                    .gradient(&x)
                    .iter()
                    .zip(obj.gradient(&y))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let xd: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(gd <= (l + 1e-6) * xd, "{}: {gd} > {l}·{xd}", obj.name());
            }
        }
    }

    #[test]
    fn quadratic_growth_for_declared_mu() {
        let objectives: Vec<Box<dyn Objective>> = vec![
            Box::new(QuadraticDiag::new(vec![2e-2, 5e-3]).unwrap()),
            Box::new(LogisticRegression::synthetic(60, 3, 7, 0.05).unwrap()),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for obj in objectives {
            let c = obj.constants();
            let (mu, f_star, x_star) = (c.mu.unwrap(), c.f_star.unwrap(), c.x_star.clone().unwrap());
            for _ in 0..500 {
                let x: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
                let d2: f64 = x.iter().zip(&x_star).map(|(a, b)| (a - b).powi(2)).sum();
                assert!(obj.value(&x) - f_star >= 0.5 * mu * d2 - 1e-12);
            }
        }
    }

    #[test]
    fn central_differences_match_gradients() {
        let objectives: Vec<Box<dyn Objective>> = vec![
            Box::new(QuadraticDiag::new(vec![2e-2, 5e-3]).unwrap()),
            Box::new(Quartic2d::new()),
            Box::new(ConstantField::new(vec![1.0, -0.5])),
            Box::new(LogisticRegression::synthetic(25, 3, 2, 1e-2).unwrap()),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-6;
        for obj in objectives {
            for _ in 0..1000 {
                let x: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
                let g = obj.gradient(&x);
                for j in 0..obj.dim() {
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[j] += h;
                    xm[j] -= h;
                    let fd = (obj.value(&xp) - obj.value(&xm)) / (2.0 * h);
                    let tol = 1e-5 * g[j].abs().max(1e-2);
                    assert!((fd - g[j]).abs() <= tol, "{} coord {j}: {fd} vs {}", obj.name(), g[j]);
                }
            }
            if let Some(x_star) = &obj.constants().x_star {
                let n: f64 = obj.gradient(x_star).iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(n <= 1e-10);
            }
        }
    }

    #[test]
    fn spec_builds() {
        let spec: ProblemSpec = toml::from_str("name = \"quartic_2d\"").unwrap();
        assert_eq!(spec.build().unwrap().dim(), 2);
        let spec: ProblemSpec = toml::from_str("name = \"half_norm\"\ndim = 4").unwrap();
        assert_eq!(spec.build().unwrap().constants().lipschitz, Some(1.0));
    }
}
