use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{FiniteSum, Objective, ProblemError};

/// Volatility of additive Gaussian gradient noise: a scalar multiple of the
/// identity or a full `d×d` matrix (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Volatility {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Volatility {
    /// `σ ξ`.
    pub fn apply(&self, xi: &[f64]) -> Vec<f64> {
        match self {
            Self::Scalar(s) => xi.iter().map(|v| s * v).collect(),
            Self::Matrix(m) => m
                .iter()
                .map(|row| row.iter().zip(xi).map(|(a, b)| a * b).sum())
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Scalar(s) => *s == 0.0,
            Self::Matrix(m) => m.iter().flatten().all(|v| *v == 0.0),
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<(), ProblemError> {
        match self {
            Self::Scalar(s) if s.is_finite() => Ok(()),
            Self::Scalar(s) => Err(ProblemError::Invalid(format!("volatility {s} is not finite"))),
            Self::Matrix(m) => {
                if m.len() != d || m.iter().any(|r| r.len() != d) {
                    return Err(ProblemError::Dimension {
                        expected: d,
                        got: m.len(),
                    });
                }
                if m.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(ProblemError::Invalid("volatility has non-finite entries".into()));
                }
                Ok(())
            }
        }
    }

    /// `σσᵀ` as a dense matrix.
    pub fn covariance(&self, d: usize) -> DMatrix<f64> {
        let s = self.dense(d);
        &s * s.transpose()
    }

    pub fn dense(&self, d: usize) -> DMatrix<f64> {
        match self {
            Self::Scalar(s) => DMatrix::identity(d, d) * *s,
            Self::Matrix(m) => DMatrix::from_fn(d, d, |i, j| m[i][j]),
        }
    }

    /// Largest eigenvalue of `σσᵀ`, the per-direction noise variance bound.
    pub fn variance_bound(&self, d: usize) -> f64 {
        match self {
            Self::Scalar(s) => s * s,
            Self::Matrix(_) => SymmetricEigen::new(self.covariance(d))
                .eigenvalues
                .iter()
                .cloned()
                .fold(0.0, f64::max),
        }
    }
}

/// How a gradient oracle is corrupted.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    #[default]
    None,
    /// `∇f(x) + σξ` with `ξ ~ N(0, I)`.
    AdditiveGaussian { sigma: Volatility },
    /// Mean of `batch` component gradients drawn uniformly with replacement.
    FiniteSum {
        #[serde(default = "one")]
        batch: usize,
    },
}

fn one() -> usize {
    1
}

impl NoiseModel {
    pub fn label(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::AdditiveGaussian { .. } => "additive_gaussian",
            Self::FiniteSum { .. } => "finite_sum",
        }
    }

    /// Checks the model is usable with `obj`.
    pub fn validate(&self, obj: &dyn Objective) -> Result<(), ProblemError> {
        match self {
            Self::None => Ok(()),
            Self::AdditiveGaussian { sigma } => sigma.check_dim(obj.dim()),
            Self::FiniteSum { batch } => {
                if *batch == 0 {
                    return Err(ProblemError::Invalid("batch must be at least 1".into()));
                }
                match obj.as_finite_sum() {
                    Some(_) => Ok(()),
                    None => Err(ProblemError::NotFiniteSum {
                        noise: self.label(),
                        objective: obj.name(),
                    }),
                }
            }
        }
    }

    /// Declared noise variance bound used by rate bounds: `λ_max(σσᵀ)` for
    /// Gaussian noise, zero without noise, unknown for finite sums.
    pub fn declared_variance(&self, d: usize) -> Option<f64> {
        match self {
            Self::None => Some(0.0),
            Self::AdditiveGaussian { sigma } => Some(sigma.variance_bound(d)),
            Self::FiniteSum { .. } => None,
        }
    }
}

/// One draw of the stochastic gradient at `x`. Unbiased given `x`.
pub fn stochastic_gradient<R: Rng + ?Sized>(
    obj: &dyn Objective,
    noise: &NoiseModel,
    x: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>, ProblemError> {
    match noise {
        NoiseModel::None => Ok(obj.gradient(x)),
        NoiseModel::AdditiveGaussian { sigma } => {
            let mut g = obj.gradient(x);
            if sigma.is_zero() {
                return Ok(g);
            }
            let xi: Vec<f64> = (0..g.len()).map(|_| rng.sample(StandardNormal)).collect();
            for (g, e) in g.iter_mut().zip(sigma.apply(&xi)) {
                *g += e;
            }
            Ok(g)
        }
        NoiseModel::FiniteSum { batch } => {
            let fs = obj.as_finite_sum().ok_or_else(|| ProblemError::NotFiniteSum {
                noise: noise.label(),
                objective: obj.name(),
            })?;
            let n = fs.n_components();
            let mut g = vec![0.0; obj.dim()];
            for _ in 0..*batch {
                let i = rng.random_range(0..n);
                for (a, b) in g.iter_mut().zip(fs.component_gradient(i, x)) {
                    *a += b / *batch as f64;
                }
            }
            Ok(g)
        }
    }
}

/// `Σ(x) = (1/n) Σᵢ (∇fᵢ − ∇f)(∇fᵢ − ∇f)ᵀ`.
pub fn empirical_covariance(fs: &dyn FiniteSum, x: &[f64]) -> DMatrix<f64> {
    let n = fs.n_components();
    let grads: Vec<DVector<f64>> = (0..n)
        .map(|i| DVector::from_vec(fs.component_gradient(i, x)))
        .collect();
    let d = grads.first().map_or(0, |g| g.len());
    let mean = grads.iter().fold(DVector::zeros(d), |acc, g| acc + g) / n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for g in &grads {
        let c = g - &mean;
        cov += &c * c.transpose();
    }
    cov / n as f64
}

/// `σ = √(hΣ)` with the principal (symmetric positive semidefinite) root.
pub fn volatility_from_covariance(cov: &DMatrix<f64>, h: f64) -> Volatility {
    let eig = SymmetricEigen::new(cov * h);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    Volatility::Matrix(
        (0..root.nrows())
            .map(|i| (0..root.ncols()).map(|j| root[(i, j)]).collect())
            .collect(),
    )
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
fn top_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows();
    if d == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-14 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Noise level estimate for a finite sum: the largest top eigenvalue of
/// `Σ(x)` over the sampled points. Returns the value and the maximizing point.
pub fn noise_level_estimate(fs: &dyn FiniteSum, points: &[Vec<f64>]) -> (f64, Option<Vec<f64>>) {
    points
        .iter()
        .map(|x| (top_eigenvalue(&empirical_covariance(fs, x)), Some(x.clone())))
        .fold((0.0, None), |best, cur| if cur.0 > best.0 { cur } else { best })
}
