use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::verify::VerifyScale;
use super::HarnessError;
use crate::continuum::{Dynamics, VarianceModel};
use crate::optimizers::Method;
use crate::problems::{NoiseModel, ProblemSpec};
use crate::theory::BoundSpec;

/// One experiment, as read from a TOML file. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; per-run streams derive from it and the run id.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_problem")]
    pub problem: ProblemSpec,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub run: RunControls,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub rates: RatesSpec,
    #[serde(default)]
    pub variance_ode: VarianceOdeSpec,
    #[serde(default)]
    pub isometry: IsometrySpec,
    #[serde(default)]
    pub warp: WarpSpec,
    #[serde(default)]
    pub verify: VerifyScale,
    /// Discrete methods. A field given as an array is a grid: the table
    /// expands to one method per combination.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<toml::Table>,
    /// Continuous models for `simulate`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<Dynamics>,
    /// Bounds checked against matching runs and tabulated by `rates`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<BoundSpec>,
}

fn default_problem() -> ProblemSpec {
    ProblemSpec::HalfNorm { dim: 2 }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            problem: default_problem(),
            noise: NoiseModel::None,
            run: RunControls::default(),
            output: OutputSpec::default(),
            tolerances: Tolerances::default(),
            rates: RatesSpec::default(),
            variance_ode: VarianceOdeSpec::default(),
            isometry: IsometrySpec::default(),
            warp: WarpSpec::default(),
            verify: VerifyScale::default(),
            methods: Vec::new(),
            models: Vec::new(),
            bounds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunControls {
    /// Steps of each discrete run.
    pub iterations: u64,
    /// Horizon of each continuous run.
    pub t_end: f64,
    /// Integration step of continuous runs.
    pub h: f64,
    pub n_seeds: u64,
    /// Keep every `record_stride`-th index (the last one is always kept).
    pub record_stride: u64,
    /// Start point; defaults to all ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Start time of continuous runs whose coefficients blow up at zero.
    pub t_start: f64,
}

impl Default for RunControls {
    fn default() -> Self {
        Self {
            iterations: 1000,
            t_end: 10.0,
            h: 1e-3,
            n_seeds: 1,
            record_stride: 1,
            x0: None,
            t_start: crate::continuum::DEFAULT_T_START,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            formats: vec![Format::Csv],
        }
    }
}

/// Tolerances of the invariant suite run by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Discrete weight sums.
    pub weight_sum: f64,
    /// Quadrature of continuous weights.
    pub weight_quadrature: f64,
    /// Heavy-ball recursion versus the expanded sum.
    pub hb_sum: f64,
    /// Semi-implicit Euler versus heavy ball.
    pub semi_implicit: f64,
    /// Monte-Carlo checks, in standard errors.
    pub z_max: f64,
    /// Constant-gradient velocity limit.
    pub velocity: f64,
    /// Time-warp path discrepancy.
    pub warp: f64,
    /// Continuity of the optimal rate at `α_max`.
    pub gamma: f64,
    /// Variance-reduction factor limit.
    pub variance_reduction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            weight_sum: 1e-12,
            weight_quadrature: 1e-8,
            hb_sum: 1e-12,
            semi_implicit: 1e-12,
            z_max: 3.0,
            velocity: 1e-2,
            warp: 1e-3,
            gamma: 1e-12,
            variance_reduction: 1e-10,
        }
    }
}

/// Points at which `rates` tabulates the configured bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesSpec {
    pub points: Vec<f64>,
}

impl Default for RatesSpec {
    fn default() -> Self {
        Self {
            points: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarianceOdeSpec {
    pub models: Vec<VarianceModel>,
    pub lambda: f64,
    pub sigma: f64,
    pub t0: f64,
    pub t_end: f64,
    pub h: f64,
    /// Sample every `stride`-th grid point.
    pub stride: u64,
}

impl Default for VarianceOdeSpec {
    fn default() -> Self {
        Self {
            models: vec![VarianceModel::Nesterov, VarianceModel::QuadraticForgetting],
            lambda: 1.0,
            sigma: 1.0,
            t0: crate::continuum::DEFAULT_T_START,
            t_end: 100.0,
            h: 1e-3,
            stride: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsometrySpec {
    pub powers: Vec<f64>,
    pub times: Vec<f64>,
    pub n_paths: u64,
    pub h: f64,
}

impl Default for IsometrySpec {
    fn default() -> Self {
        Self {
            powers: vec![0.0, 1.0, 3.0],
            times: vec![1.0, 2.0],
            n_paths: 100_000,
            h: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WarpSpec {
    pub p: f64,
    pub t_end: f64,
    pub h: f64,
    pub n_checks: u64,
}

impl Default for WarpSpec {
    fn default() -> Self {
        Self {
            p: 2.0,
            t_end: 20.0,
            h: 1e-5,
            n_checks: 200,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Git-style blob hash of the canonical serialization:
    /// `sha256("blob <len>\0<bytes>")`, hex encoded.
    pub fn content_hash(&self) -> Result<String, HarnessError> {
        let text = self.to_toml()?;
        let mut hasher = Sha256::new();
        hasher.update(format!("blob {}\0", text.len()).as_bytes());
        hasher.update(text.as_bytes());
        Ok(hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed {} does not fit a TOML integer", self.seed));
        }
        let r = &self.run;
        if r.n_seeds == 0 {
            return bad("run.n_seeds must be at least 1".into());
        }
        if r.record_stride == 0 {
            return bad("run.record_stride must be at least 1".into());
        }
        if !(r.h > 0.0) || !(r.t_end > 0.0) {
            return bad(format!("run.h and run.t_end must be > 0, got {} and {}", r.h, r.t_end));
        }
        self.expand_methods()?;
        for m in &self.models {
            m.validate()?;
        }
        for b in &self.bounds {
            b.validate()?;
        }
        Ok(())
    }

    /// Concrete methods after grid expansion, in declaration order with
    /// grid axes varying fastest in key order.
    pub fn expand_methods(&self) -> Result<Vec<Method>, HarnessError> {
        let mut out = Vec::new();
        for table in &self.methods {
            for combo in expand_grid(table) {
                let method: Method = toml::Value::Table(combo.clone())
                    .try_into()
                    .map_err(|e: toml::de::Error| {
                        HarnessError::Config(format!("method {combo}: {}", e.message()))
                    })?;
                out.push(method);
            }
        }
        Ok(out)
    }

    pub fn x0(&self, dim: usize) -> Result<Vec<f64>, HarnessError> {
        match &self.run.x0 {
            Some(x) if x.len() == dim => Ok(x.clone()),
            Some(x) => Err(HarnessError::Config(format!(
                "run.x0 has {} entries, problem has dimension {dim}",
                x.len()
            ))),
            None => Ok(vec![1.0; dim]),
        }
    }
}

/// Cartesian product over the array-valued entries of a table.
fn expand_grid(table: &toml::Table) -> Vec<toml::Table> {
    let mut combos = vec![toml::Table::new()];
    for (key, value) in table {
        let choices: Vec<toml::Value> = match value {
            toml::Value::Array(items) => items.clone(),
            other => vec![other.clone()],
        };
        combos = combos
            .into_iter()
            .flat_map(|base| {
                choices.iter().map(move |c| {
                    let mut t = base.clone();
                    t.insert(key.clone(), c.clone());
                    t
                })
            })
            .collect();
    }
    combos
}
