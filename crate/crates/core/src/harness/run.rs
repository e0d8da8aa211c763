use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::continuum::{integrate_trajectory, Dynamics, PathStatus, Record, SdeSpec};
use crate::optimizers::{Method, OptimizerState};
use crate::problems::{stochastic_gradient, NoiseModel, Objective, Volatility};
use crate::stats::Welford;

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Index (iteration or record number) at which the state became
    /// non-finite. Records before it are kept.
    Diverged { at: u64 },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Completed => "completed",
            Self::Diverged { .. } => "diverged",
        }
    }
}

/// One recorded point of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Iteration `k`, or record number for continuous runs.
    pub index: u64,
    /// Continuous time; absent for discrete runs.
    pub time: Option<f64>,
    /// `f(x) − f*`; absent when the problem declares no `f*`.
    pub f_gap: Option<f64>,
    /// Norm of the exact gradient at the recorded point.
    pub grad_norm: f64,
    /// `‖x_k − x_{k−1}‖` for discrete runs, the speed `‖V(t)‖` for continuous ones.
    pub step_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub run_id: String,
    pub method: String,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
}

/// Across-seed statistics of one method at one index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub method: String,
    pub index: u64,
    pub time: Option<f64>,
    pub n_runs: u64,
    pub f_gap_mean: Option<f64>,
    /// Half-width `1.96·s/√n`.
    pub f_gap_ci95: Option<f64>,
    pub grad_norm_mean: f64,
    pub grad_norm_ci95: f64,
}

/// Identifier of run `seed` of `method`, stable across configs.
pub fn run_id(method: &str, seed: u64) -> String {
    format!("{method}#{seed}")
}

/// RNG of one run: stream `H(run_id)` of the master seed, where `H` is the
/// first eight bytes of SHA-256. Adding runs never changes another run's
/// noise.
pub fn run_rng(master: u64, run_id: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(run_id.as_bytes());
    let mut stream = [0u8; 8];
    stream.copy_from_slice(&digest[..8]);
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(u64::from_le_bytes(stream));
    rng
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn record_point(obj: &dyn Objective, x: &[f64], index: u64, time: Option<f64>, step_norm: f64) -> TraceRecord {
    TraceRecord {
        index,
        time,
        f_gap: obj.constants().f_star.map(|f| obj.value(x) - f),
        grad_norm: norm(&obj.gradient(x)),
        step_norm,
    }
}

/// Runs one discrete method from `x0` for `iterations` steps.
pub fn run_discrete(
    obj: &dyn Objective,
    noise: &NoiseModel,
    method: &Method,
    x0: &[f64],
    iterations: u64,
    stride: u64,
    master_seed: u64,
    seed: u64,
) -> Result<Trace, HarnessError> {
    let label = method.label();
    let id = run_id(&label, seed);
    let mut rng = run_rng(master_seed, &id);
    let mut state = OptimizerState::new(x0.to_vec());
    let mut records = vec![record_point(obj, &state.x, 0, None, 0.0)];
    let mut status = RunStatus::Completed;
    for k in 0..iterations {
        let g = stochastic_gradient(obj, noise, &state.x, &mut rng)?;
        let step = match method.step(&state, &g) {
            Ok(s) => s,
            Err(_) if g.iter().any(|v| !v.is_finite()) => {
                status = RunStatus::Diverged { at: k };
                break;
            }
            Err(crate::optimizers::OptimError::NonFiniteState(_)) => {
                status = RunStatus::Diverged { at: k + 1 };
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let index = k + 1;
        let rec = record_point(obj, &step.state.x, index, None, step.report.step_norm());
        let finite = rec.grad_norm.is_finite() && rec.f_gap.is_none_or(f64::is_finite);
        if !finite {
            status = RunStatus::Diverged { at: index };
            break;
        }
        state = step.state;
        if index % stride == 0 || index == iterations {
            records.push(rec);
        }
    }
    Ok(Trace {
        run_id: id,
        method: label,
        seed,
        records,
        status,
    })
}

/// Runs one continuous model from rest at `x0` up to `t_end`.
pub fn run_continuous(
    obj: &dyn Objective,
    spec: &SdeSpec,
    x0: &[f64],
    t_end: f64,
    h: f64,
    stride: u64,
    master_seed: u64,
    seed: u64,
) -> Result<Trace, HarnessError> {
    let label = spec.dynamics.label();
    let id = run_id(&label, seed);
    let mut rng = run_rng(master_seed, &id);
    let v0 = vec![0.0; x0.len()];
    let path = integrate_trajectory(obj, spec, x0, &v0, t_end, h, &mut rng, &Record::Stride(stride as usize))?;
    let records = path
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| record_point(obj, &s.x, i as u64, Some(s.t), norm(&s.v)))
        .collect::<Vec<_>>();
    let status = match path.status {
        PathStatus::Completed => RunStatus::Completed,
        PathStatus::Diverged { .. } => RunStatus::Diverged {
            at: records.len() as u64,
        },
    };
    Ok(Trace {
        run_id: id,
        method: label,
        seed,
        records,
        status,
    })
}

/// Sorts traces by method, then seed.
pub fn sort_traces(traces: &mut [Trace]) {
    traces.sort_by(|a, b| a.method.cmp(&b.method).then(a.seed.cmp(&b.seed)));
}

/// All (method × seed) discrete runs of a config, on the current rayon pool.
pub fn run_optimize(cfg: &ExperimentConfig) -> Result<Vec<Trace>, HarnessError> {
    let obj = cfg.problem.build()?;
    cfg.noise.validate(obj.as_ref())?;
    let x0 = cfg.x0(obj.dim())?;
    let methods = cfg.expand_methods()?;
    if methods.is_empty() {
        return Err(HarnessError::Config("no [[methods]] to run".into()));
    }
    let jobs: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|m| (0..cfg.run.n_seeds).map(move |s| (*m, s)))
        .collect();
    let mut traces = jobs
        .par_iter()
        .map(|(m, s)| {
            run_discrete(
                obj.as_ref(),
                &cfg.noise,
                m,
                &x0,
                cfg.run.iterations,
                cfg.run.record_stride,
                cfg.seed,
                *s,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    sort_traces(&mut traces);
    Ok(traces)
}

/// Volatility of continuous runs: the Gaussian noise of the config, zero otherwise.
pub fn config_volatility(noise: &NoiseModel) -> Result<Volatility, HarnessError> {
    match noise {
        NoiseModel::None => Ok(Volatility::Scalar(0.0)),
        NoiseModel::AdditiveGaussian { sigma } => Ok(sigma.clone()),
        NoiseModel::FiniteSum { .. } => Err(HarnessError::Config(
            "continuous runs take additive_gaussian noise, not finite_sum".into(),
        )),
    }
}

/// All (model × seed) continuous runs of a config, on the current rayon pool.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<Vec<Trace>, HarnessError> {
    let obj = cfg.problem.build()?;
    let x0 = cfg.x0(obj.dim())?;
    let sigma = config_volatility(&cfg.noise)?;
    if cfg.models.is_empty() {
        return Err(HarnessError::Config("no [[models]] to simulate".into()));
    }
    let specs: Vec<SdeSpec> = cfg
        .models
        .iter()
        .map(|d: &Dynamics| {
            let spec = SdeSpec::new(*d, sigma.clone());
            if d.singularity() > 0.0 {
                spec.with_start(cfg.run.t_start)
            } else {
                spec
            }
        })
        .collect();
    let jobs: Vec<(&SdeSpec, u64)> = specs
        .iter()
        .flat_map(|sp| (0..cfg.run.n_seeds).map(move |s| (sp, s)))
        .collect();
    let mut traces = jobs
        .par_iter()
        .map(|(sp, s)| {
            run_continuous(
                obj.as_ref(),
                sp,
                &x0,
                cfg.run.t_end,
                cfg.run.h,
                cfg.run.record_stride,
                cfg.seed,
                *s,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    sort_traces(&mut traces);
    Ok(traces)
}

/// Per-method, per-index mean and CI over the runs that reached the index.
/// Diverged runs stop contributing at their divergence index.
pub fn aggregate(traces: &[Trace]) -> Vec<AggregatePoint> {
    #[derive(Default)]
    struct Acc {
        time: Option<f64>,
        f_gap: Welford,
        has_gap: bool,
        grad: Welford,
    }
    let mut ordered: Vec<&Trace> = traces.iter().collect();
    ordered.sort_by(|a, b| a.method.cmp(&b.method).then(a.seed.cmp(&b.seed)));
    let mut acc: BTreeMap<(&str, u64), Acc> = BTreeMap::new();
    for t in ordered {
        for r in &t.records {
            let a = acc.entry((t.method.as_str(), r.index)).or_default();
            a.time = a.time.or(r.time);
            if let Some(g) = r.f_gap {
                a.f_gap.push(g);
                a.has_gap = true;
            }
            a.grad.push(r.grad_norm);
        }
    }
    acc.into_iter()
        .map(|((method, index), a)| AggregatePoint {
            method: method.to_string(),
            index,
            time: a.time,
            n_runs: a.grad.count(),
            f_gap_mean: a.has_gap.then(|| a.f_gap.mean()),
            f_gap_ci95: a.has_gap.then(|| a.f_gap.ci95()),
            grad_norm_mean: a.grad.mean(),
            grad_norm_ci95: a.grad.ci95(),
        })
        .collect()
}
