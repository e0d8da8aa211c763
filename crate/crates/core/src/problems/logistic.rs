use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Constants, FiniteSum, Objective, ProblemError};

/// Fraction of labels flipped by the synthetic generator.
pub const LABEL_NOISE: f64 = 0.1;

/// L2-regularized binary logistic regression,
/// `f(x) = (1/n) Σᵢ log(1 + exp(−yᵢ⟨aᵢ, x⟩)) + (λ/2)‖x‖²`.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    lambda: f64,
    constants: Constants,
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticRegression {
    /// Gaussian features, a Gaussian planted separator, labels `sign⟨a, w*⟩`
    /// flipped with probability [`LABEL_NOISE`]. Fully determined by `seed`.
    pub fn synthetic(n: usize, dim: usize, seed: u64, lambda: f64) -> Result<Self, ProblemError> {
        if n == 0 || dim == 0 {
            return Err(ProblemError::Invalid("logistic needs n >= 1 and dim >= 1".into()));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(ProblemError::Invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planted: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let a: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let margin: f64 = a.iter().zip(&planted).map(|(a, w)| a * w).sum();
            let mut y = if margin >= 0.0 { 1.0 } else { -1.0 };
            if rng.random_bool(LABEL_NOISE) {
                y = -y;
            }
            features.push(a);
            labels.push(y);
        }
        Self::from_data(features, labels, lambda)
    }

    pub fn from_data(
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        lambda: f64,
    ) -> Result<Self, ProblemError> {
        let max_row = features
            .iter()
            .map(|a| a.iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max);
        let mut lr = Self {
            features,
            labels,
            lambda,
            constants: Constants {
                lipschitz: Some(0.25 * max_row + lambda),
                mu: (lambda > 0.0).then_some(lambda),
                tau: Some(1.0),
                ..Constants::default()
            },
        };
        if lambda > 0.0 {
            let x_star = lr.newton_minimizer(100);
            lr.constants.f_star = Some(lr.value(&x_star));
            lr.constants.x_star = Some(x_star);
        }
        Ok(lr)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn margin(&self, i: usize, x: &[f64]) -> f64 {
        self.labels[i] * self.features[i].iter().zip(x).map(|(a, x)| a * x).sum::<f64>()
    }

    /// Damped Newton from the origin; the Hessian is positive definite for
    /// `λ > 0`.
    fn newton_minimizer(&self, max_iter: usize) -> Vec<f64> {
        let d = self.dim();
        let n = self.features.len() as f64;
        let mut x = vec![0.0; d];
        for _ in 0..max_iter {
            let g = DVector::from_vec(self.gradient(&x));
            if g.norm() < 1e-14 {
                break;
            }
            let mut h = DMatrix::<f64>::identity(d, d) * self.lambda;
            for a in &self.features {
                let s = sigmoid(a.iter().zip(&x).map(|(a, x)| a * x).sum());
                let a = DVector::from_column_slice(a);
                h += &a * a.transpose() * (s * (1.0 - s) / n);
            }
            let Some(chol) = h.cholesky() else { break };
            let dir = chol.solve(&g);
            let f0 = self.value(&x);
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(x, d)| x - t * d).collect();
                if self.value(&trial) <= f0 - 0.25 * t * g.dot(&dir) || t < 1e-10 {
                    x = trial;
                    break;
                }
                t *= 0.5;
            }
        }
        x
    }
}

impl Objective for LogisticRegression {
    fn name(&self) -> String {
        format!("logistic(n={},dim={})", self.features.len(), self.dim())
    }

    fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.features.len() as f64;
        let loss: f64 = (0..self.features.len())
            .map(|i| softplus(-self.margin(i, x)))
            .sum();
        loss / n + 0.5 * self.lambda * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.features.len();
        let mut g = vec![0.0; self.dim()];
        for i in 0..n {
            let coef = -self.labels[i] * sigmoid(-self.margin(i, x));
            for (gj, aj) in g.iter_mut().zip(&self.features[i]) {
                *gj += coef * aj;
            }
        }
        g.iter_mut()
            .zip(x)
            .for_each(|(gj, xj)| *gj = *gj / n as f64 + self.lambda * xj);
        g
    }

    fn constants(&self) -> &Constants {
        &self.constants
    }

    fn as_finite_sum(&self) -> Option<&dyn FiniteSum> {
        Some(self)
    }
}

impl FiniteSum for LogisticRegression {
    fn n_components(&self) -> usize {
        self.features.len()
    }

    fn component_gradient(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let coef = -self.labels[i] * sigmoid(-self.margin(i, x));
        self.features[i]
            .iter()
            .zip(x)
            .map(|(a, x)| coef * a + self.lambda * x)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regularizer_declares_mu() {
        let lr = LogisticRegression::synthetic(40, 3, 0, 0.1).unwrap();
        assert_eq!(lr.constants().mu, Some(0.1));
        let lr = LogisticRegression::synthetic(40, 3, 0, 0.0).unwrap();
        assert_eq!(lr.constants().mu, None);
        assert_eq!(lr.constants().f_star, None);
    }

    #[test]
    fn full_gradient_is_component_mean() {
        let lr = LogisticRegression::synthetic(37, 4, 9, 0.01).unwrap();
        let x = [0.3, -1.2, 0.8, 2.0];
        let mut mean = [0.0; 4];
        for i in 0..lr.n_components() {
            for (m, g) in mean.iter_mut().zip(lr.component_gradient(i, &x)) {
                *m += g / 37.0;
            }
        }
        for (a, b) in mean.iter().zip(lr.gradient(&x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn newton_optimum_matches_long_gradient_descent() {
        let lr = LogisticRegression::synthetic(80, 3, 5, 0.05).unwrap();
        // Independent oracle: plain gradient descent at 1/L until stationary.
        let step = 1.0 / lr.constants().lipschitz.unwrap();
        let mut x = vec![0.0; 3];
        for _ in 0..200_000 {
            let g = lr.gradient(&x);
            if g.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-12 {
                break;
            }
            x.iter_mut().zip(&g).for_each(|(x, g)| *x -= step * g);
        }
        let gd_norm = lr.gradient(&x).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(gd_norm <= 1e-8);
        let x_star = lr.constants().x_star.clone().unwrap();
        let grad_norm = lr.gradient(&x_star).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(grad_norm <= 1e-10, "{grad_norm}");
        for (a, b) in x.iter().zip(&x_star) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((lr.value(&x) - lr.constants().f_star.unwrap()).abs() < 1e-14);
    }

    #[test]
    fn generator_is_reproducible() {
        let a = LogisticRegression::synthetic(10, 2, 42, 0.0).unwrap();
        let b = LogisticRegression::synthetic(10, 2, 42, 0.0).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
    }
}
