//! The invariant suite behind `memgrad verify`.
//!
//! Each check compares an implementation against an independent oracle
//! (closed form, brute-force expansion, or Monte Carlo) and reports the
//! observed discrepancy next to its tolerance. Scales are parameters so the
//! same checks run quickly in `verify` and at full size in the acceptance
//! tests. All randomness comes from fixed streams, so reports are
//! byte-identical across runs and thread counts.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::check::{check_bounds, BoundReport, RunSource};
use super::config::ExperimentConfig;
use super::emit::{emit, write_rows};
use super::run::{aggregate, run_discrete, run_optimize, Trace};
use super::HarnessError;
use crate::continuum::{
    ensemble, integrate_trajectory, integrate_variance_ode, ito_isometry_mc_grid,
    semi_implicit_euler_step, velocity_samples, warp_equivalence_check, Dynamics, PhaseState,
    Record, SdeSpec, VarianceModel, Viscosity,
};
use crate::memory::{discrete_weights_memsgd, MemoryFunction, MemoryOrder};
use crate::optimizers::{hb_step, Method, OptimizerState};
use crate::problems::{ConstantField, NoiseModel, Objective, QuadraticDiag, Quartic2d, Volatility};
use crate::quad::simpson_graded;
use crate::stats::Summary;
use crate::theory::{
    fmt_f64, gamma_branches, gamma_star, hb_alpha_max, hb_sum_expand, mg_alpha_max,
    variance_reduction_factor, BoundSpec,
};

/// Result of one invariant check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    /// Worst discrepancy (or z-score, for Monte-Carlo checks).
    pub observed: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn below(name: impl Into<String>, observed: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            tolerance,
            passed: observed < tolerance,
        }
    }

    fn at_most(name: impl Into<String>, observed: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            tolerance,
            passed: observed <= tolerance,
        }
    }

    fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            observed: if ok { 0.0 } else { 1.0 },
            tolerance: 0.0,
            passed: ok,
        }
    }
}

/// `max |Σⱼ w(j,k) − 1|` over `k ≤ k_max` for each MemSGD order.
pub fn check_discrete_weights(orders: &[f64], k_max: usize, tol: f64) -> Result<CheckOutcome, HarnessError> {
    let mut worst: f64 = 0.0;
    for &p in orders {
        let p = MemoryOrder::new(p)?;
        for k in 0..=k_max {
            let s: f64 = discrete_weights_memsgd(p, k).iter().sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    Ok(CheckOutcome::at_most("discrete_weight_sum", worst, tol))
}

/// Memory laws whose weights are checked by quadrature.
pub fn quadrature_memories() -> Vec<MemoryFunction> {
    vec![
        MemoryFunction::Decaying,
        MemoryFunction::constant(),
        MemoryFunction::square_root(),
        MemoryFunction::linear(),
        MemoryFunction::quadratic(),
        MemoryFunction::Polynomial { p: 10.0 },
        MemoryFunction::Exponential { alpha: 0.1 },
        MemoryFunction::Exponential { alpha: 1.0 },
        MemoryFunction::Exponential { alpha: 5.0 },
        MemoryFunction::SuperExponential { alpha: 1.0 },
        MemoryFunction::SuperExponential { alpha: 1.5 },
        MemoryFunction::SuperExponential { alpha: 2.0 },
    ]
}

/// `max |∫₀ᵗ ṁ(s)/m(t) ds − 1|` by graded Simpson quadrature.
pub fn check_continuous_weights(
    memories: &[MemoryFunction],
    times: &[f64],
    tol: f64,
) -> Result<CheckOutcome, HarnessError> {
    let mut worst: f64 = 0.0;
    for m in memories {
        for &t in times {
            let mass = simpson_graded(|s| m.continuous_weight(s, t).unwrap_or(f64::NAN), 1e-12, t, 1000);
            worst = worst.max((mass - 1.0).abs());
        }
    }
    Ok(CheckOutcome::at_most("continuous_weight_mass", worst, tol))
}

/// Iterated heavy ball with a random momentum schedule against the expanded
/// weighted sum, `trials` times with `k ≤ k_max`.
pub fn check_hb_sum(trials: usize, k_max: usize, seed: u64, tol: f64) -> Result<CheckOutcome, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let k = rng.random_range(0..=k_max);
        let d = rng.random_range(1..=3);
        let eta = rng.random_range(1e-3..1.0);
        let betas: Vec<f64> = (0..=k).map(|_| rng.random_range(0.0..0.99)).collect();
        let grads: Vec<Vec<f64>> = (0..=k)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let x0: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut state = OptimizerState::new(x0.clone());
        for (g, b) in grads.iter().zip(&betas) {
            state = hb_step(&state, g, eta, *b)?.state;
        }
        let direct = hb_sum_expand(&betas, eta, &grads, &x0)?;
        for (a, b) in state.x.iter().zip(&direct) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(CheckOutcome::at_most("hb_sum_expansion", worst, tol))
}

/// Semi-implicit Euler on the heavy-ball ODE against heavy ball with
/// `β = 1 − hα`, `η = h²`, on `Σ cᵢxᵢ²` from `(1, 1)`.
pub fn check_semi_implicit(
    hs: &[f64],
    alphas: &[f64],
    steps: usize,
    tol: f64,
) -> Result<CheckOutcome, HarnessError> {
    let q = QuadraticDiag::new(vec![2e-2, 5e-3])?;
    let mut worst: f64 = 0.0;
    for &h in hs {
        for &alpha in alphas {
            let (beta, eta) = (1.0 - h * alpha, h * h);
            let mut s = PhaseState::at_rest(vec![1.0, 1.0], 0.0);
            let mut o = OptimizerState::new(vec![1.0, 1.0]);
            for _ in 0..steps {
                s = semi_implicit_euler_step(&s, Viscosity::Constant { alpha }, &q, h);
                o = hb_step(&o, &q.gradient(&o.x), eta, beta)?.state;
                for (a, b) in s.x.iter().zip(&o.x) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    Ok(CheckOutcome::at_most("semi_implicit_vs_heavy_ball", worst, tol))
}

/// Largest `|MC − t^{2p+1}/(2p+1)|` in standard errors.
pub fn check_ito(
    powers: &[f64],
    times: &[f64],
    n_paths: usize,
    h: f64,
    seed: u64,
    z_max: f64,
) -> Result<CheckOutcome, HarnessError> {
    let est = ito_isometry_mc_grid(powers, times, n_paths, h, seed)?;
    let worst = est.iter().map(|e| e.z_score()).fold(0.0, f64::max);
    Ok(CheckOutcome::below("ito_isometry_z", worst, z_max))
}

/// Constant unit gradient, no noise: `|V(10) + 1|` under quadratic forgetting
/// and `max |V(t) + t/4|/t` on `t ∈ [2, 8]` for Nesterov's flow.
pub fn check_constant_gradient(h: f64, tol: f64) -> Result<Vec<CheckOutcome>, HarnessError> {
    let f = ConstantField::new(vec![1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let qf = SdeSpec::deterministic(Dynamics::mg(MemoryFunction::quadratic()));
    let p = integrate_trajectory(&f, &qf, &[0.0], &[0.0], 10.0, h, &mut rng, &Record::Final)?;
    let v10 = p.last().map_or(f64::NAN, |s| (s.v[0] + 1.0).abs());
    let times: Vec<f64> = (0..=60).map(|i| 2.0 + 0.1 * i as f64).collect();
    let nag = SdeSpec::deterministic(Dynamics::Nesterov);
    let p = integrate_trajectory(&f, &nag, &[0.0], &[0.0], 8.0, h, &mut rng, &Record::Times(times))?;
    let rel = p
        .samples
        .iter()
        .map(|s| (s.v[0] + s.t / 4.0).abs() / s.t)
        .fold(0.0, f64::max);
    Ok(vec![
        CheckOutcome::below("quadratic_forgetting_velocity_limit", v10, tol),
        CheckOutcome::below("nesterov_velocity_amplification", rel, tol),
    ])
}

/// Constant unit gradient with volatility `σ`: sample variance of the
/// velocity against `σ²t/7` (Nesterov) and `9σ²/(5t)` (quadratic forgetting),
/// in standard errors.
pub fn check_velocity_variances(
    sigma: f64,
    times: &[f64],
    n_paths: usize,
    h: f64,
    seed: u64,
    z_max: f64,
) -> Result<Vec<CheckOutcome>, HarnessError> {
    let f = ConstantField::new(vec![1.0]);
    let t_end = times.iter().cloned().fold(0.0, f64::max);
    type Exact = fn(f64, f64) -> f64;
    let models: [(&str, Dynamics, Exact); 2] = [
        ("nesterov_velocity_variance_z", Dynamics::Nesterov, |s2, t| s2 * t / 7.0),
        (
            "quadratic_forgetting_velocity_variance_z",
            Dynamics::mg(MemoryFunction::quadratic()),
            |s2, t| 9.0 * s2 / (5.0 * t),
        ),
    ];
    let mut out = Vec::new();
    for (i, (name, dynamics, exact)) in models.into_iter().enumerate() {
        let spec = SdeSpec::new(dynamics, Volatility::Scalar(sigma));
        let paths = ensemble(&f, &spec, &[0.0], &[0.0], t_end, h, times, n_paths, seed.wrapping_add(i as u64))?;
        let mut worst: f64 = 0.0;
        for (j, &t) in times.iter().enumerate() {
            let s = Summary::of(&velocity_samples(&paths, j, 0));
            worst = worst.max((s.variance - exact(sigma * sigma, t)).abs() / s.variance_se);
        }
        out.push(CheckOutcome::below(name, worst, z_max));
    }
    Ok(out)
}

/// Dynamics of the two second-moment models on `λx²/2`.
fn variance_dynamics(model: VarianceModel) -> Dynamics {
    match model {
        VarianceModel::Nesterov => Dynamics::Nesterov,
        VarianceModel::QuadraticForgetting => Dynamics::mg(MemoryFunction::quadratic()),
    }
}

/// RK4 `p3 = E[V²]` against the Monte-Carlo mean of `V²` on `λx²/2` from
/// `X = 1`, `V = 0`, in standard errors of that mean.
pub fn check_variance_ode_mc(
    lambda: f64,
    sigma: f64,
    times: &[f64],
    n_paths: usize,
    h: f64,
    seed: u64,
    z_max: f64,
) -> Result<Vec<CheckOutcome>, HarnessError> {
    let q = QuadraticDiag::new(vec![lambda / 2.0])?;
    let t_end = times.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::new();
    for (i, model) in [VarianceModel::Nesterov, VarianceModel::QuadraticForgetting]
        .into_iter()
        .enumerate()
    {
        let spec = SdeSpec::new(variance_dynamics(model), Volatility::Scalar(sigma));
        let ode = integrate_variance_ode(model, spec.t_start, t_end, h, lambda, sigma * sigma, times, 1)?;
        let paths = ensemble(&q, &spec, &[1.0], &[0.0], t_end, h, times, n_paths, seed.wrapping_add(i as u64))?;
        let mut worst: f64 = 0.0;
        for (j, s) in ode.iter().enumerate() {
            let sq: Vec<f64> = velocity_samples(&paths, j, 0).iter().map(|v| v * v).collect();
            let mc = Summary::of(&sq);
            worst = worst.max((mc.mean - s.p3).abs() / mc.mean_se());
        }
        out.push(CheckOutcome::below(format!("{}_second_moment_ode_vs_mc_z", model.label()), worst, z_max));
    }
    Ok(out)
}

/// Qualitative shape of `p3` on `[1, t_end]` at `λ = σ = 1`: Nesterov's is
/// non-decreasing; quadratic forgetting's stays below `cap` and has decayed
/// between `t = 10` and `t_end`. The observed value of the second check is
/// the supremum.
pub fn check_variance_ode_shape(t_end: f64, h: f64, cap: f64) -> Result<Vec<CheckOutcome>, HarnessError> {
    let t0 = crate::continuum::DEFAULT_T_START;
    let times: Vec<f64> = (0..=((t_end - 1.0) as usize * 10))
        .map(|i| 1.0 + 0.1 * i as f64)
        .collect();
    let nag = integrate_variance_ode(VarianceModel::Nesterov, t0, t_end, h, 1.0, 1.0, &times, 1)?;
    let worst_drop = nag
        .windows(2)
        .map(|w| w[0].p3 - w[1].p3)
        .fold(0.0, f64::max);
    let qf = integrate_variance_ode(VarianceModel::QuadraticForgetting, t0, t_end, h, 1.0, 1.0, &times, 1)?;
    let sup = qf.iter().map(|s| s.p3).fold(0.0, f64::max);
    let at10 = qf.iter().find(|s| (s.t - 10.0).abs() < 0.05).map_or(f64::NAN, |s| s.p3);
    let last = qf.last().map_or(f64::NAN, |s| s.p3);
    Ok(vec![
        CheckOutcome::at_most("nesterov_p3_monotone_max_drop", worst_drop, 0.0),
        CheckOutcome::below("quadratic_forgetting_p3_sup", sup, cap),
        CheckOutcome::flag("quadratic_forgetting_p3_decays", last < at10),
    ])
}

/// Scaling `σ²` by 4 scales the noise-driven part of every moment by 4.
pub fn check_variance_linearity(h: f64, tol: f64) -> Result<CheckOutcome, HarnessError> {
    let times = [1.0, 5.0, 10.0];
    let mut worst: f64 = 0.0;
    for model in [VarianceModel::Nesterov, VarianceModel::QuadraticForgetting] {
        let run = |s2| integrate_variance_ode(model, 1e-12, 10.0, h, 1.0, s2, &times, 1);
        let (z, one, four) = (run(0.0)?, run(1.0)?, run(4.0)?);
        for ((a, b), c) in z.iter().zip(&one).zip(&four) {
            for (x0, x1, x4) in [(a.p1, b.p1, c.p1), (a.p2, b.p2, c.p2), (a.p3, b.p3, c.p3)] {
                let (d1, d4) = (x1 - x0, x4 - x0);
                worst = worst.max((d4 - 4.0 * d1).abs() / d4.abs().max(1e-300));
            }
        }
    }
    Ok(CheckOutcome::at_most("variance_ode_linearity", worst, tol))
}

/// Deterministic MemSGD-p on `½‖x‖²` with `η = (p−1)/(pL)`, checked against
/// its rate bound at every iteration. Returns one outcome per order, observed
/// value the worst `(gap − bound)/bound`.
pub fn check_memsgd_deterministic(orders: &[f64], iterations: u64) -> Result<Vec<CheckOutcome>, HarnessError> {
    let q = QuadraticDiag::half_norm(2);
    let l = q.constants().lipschitz.unwrap_or(1.0);
    let x0 = [1.0, 1.0];
    let mut out = Vec::new();
    for &p in orders {
        let eta = (p - 1.0) / (p * l);
        let m = Method::MemSgd {
            lr: eta,
            p: MemoryOrder::new(p)?,
        };
        let trace = run_discrete(&q, &NoiseModel::None, &m, &x0, iterations, 1, 0, 0)?;
        let bound = BoundSpec::MemSgd {
            p,
            eta,
            d: 2.0,
            sigma2: 0.0,
            dist2: 2.0,
        };
        out.push(bound_outcome(format!("memsgd_p{p}_deterministic_bound"), &[trace], &RunSource::Discrete(m), &bound));
    }
    Ok(out)
}

fn bound_outcome(name: String, traces: &[Trace], source: &RunSource, bound: &BoundSpec) -> CheckOutcome {
    match check_bounds(traces, source, bound) {
        BoundReport::Checked {
            points,
            violations,
            max_relative_excess,
            ..
        } => CheckOutcome {
            name,
            observed: max_relative_excess,
            tolerance: crate::harness::check::ROUNDOFF_SLACK,
            passed: violations == 0 && points > 0,
        },
        BoundReport::CannotCheck { .. } => CheckOutcome::flag(name, false),
    }
}

/// Volatility of the quartic protocol: `0.5·I`.
pub const QUARTIC_SIGMA: f64 = 0.5;

/// Quartic with additive Gaussian noise, MemSGD-2 from `(1, 1)` with
/// `η = 1/(2L)` over `n_seeds` runs: `mean − CI₉₅` of the gap against the
/// rate bound with `ς² = σ²`, at every recorded index. Also returns the
/// traces (MemSGD-2, heavy ball with `β = 0.8`, SGD, same stepsize).
pub fn check_memsgd_quartic(
    n_seeds: u64,
    iterations: u64,
    stride: u64,
    seed: u64,
) -> Result<(CheckOutcome, Vec<Trace>), HarnessError> {
    let q = Quartic2d::new();
    let l = q.constants().lipschitz.unwrap_or(f64::NAN);
    let p = 2.0;
    let eta = (p - 1.0) / (p * l);
    let noise = NoiseModel::AdditiveGaussian {
        sigma: Volatility::Scalar(QUARTIC_SIGMA),
    };
    let memsgd = Method::MemSgd {
        lr: eta,
        p: MemoryOrder::new(p)?,
    };
    let methods = [memsgd, Method::HeavyBall { lr: eta, beta: 0.8 }, Method::Sgd { lr: eta }];
    let jobs: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|m| (0..n_seeds).map(move |s| (*m, s)))
        .collect();
    use rayon::prelude::*;
    let mut traces = jobs
        .par_iter()
        .map(|(m, s)| run_discrete(&q, &noise, m, &[1.0, 1.0], iterations, stride, seed, *s))
        .collect::<Result<Vec<_>, _>>()?;
    super::run::sort_traces(&mut traces);
    let label = memsgd.label();
    let mine: Vec<Trace> = traces.iter().filter(|t| t.method == label).cloned().collect();
    let bound = BoundSpec::MemSgd {
        p,
        eta,
        d: 2.0,
        sigma2: QUARTIC_SIGMA * QUARTIC_SIGMA,
        dist2: 2.0,
    };
    let outcome = bound_outcome("memsgd_quartic_mean_bound".into(), &mine, &RunSource::Discrete(memsgd), &bound);
    Ok((outcome, traces))
}

/// Time warp of linear forgetting onto the `(2p−1)/t` heavy-ball flow on the
/// quadratic `2·10⁻² x₁² + 5·10⁻³ x₂²` from `(1, 1)`.
pub fn check_warp(p: f64, t_end: f64, h: f64, n_checks: usize, tol: f64) -> Result<CheckOutcome, HarnessError> {
    let q = QuadraticDiag::new(vec![2e-2, 5e-3])?;
    let r = warp_equivalence_check(&q, &[1.0, 1.0], p, t_end, h, n_checks)?;
    Ok(CheckOutcome::below("time_warp_discrepancy", r.discrepancy, tol))
}

/// Branch continuity of the optimal rate at `α_max` over random `(τ, μ̃)`,
/// plus the exact flow specializations.
pub fn check_gamma(draws: usize, seed: u64, tol: f64) -> Result<Vec<CheckOutcome>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let tau = rng.random_range(1e-3..=1.0);
        let mu = 10f64.powf(rng.random_range(-3.0..2.0));
        let g = gamma_star(1.0, tau, mu)?;
        let (a, b) = gamma_branches(g.alpha_max, tau, mu);
        let expected = tau / 2.0 * mu.sqrt();
        worst = worst.max((a - b).abs()).max((a - expected).abs());
    }
    let mut exact = true;
    for _ in 0..draws {
        let mu = 10f64.powf(rng.random_range(-3.0..2.0));
        exact &= mg_alpha_max(mu) == 9.0 * mu / 4.0;
        exact &= hb_alpha_max(mu) == 1.5 * mu.sqrt();
        exact &= gamma_star(1.0, 1.0, mu)?.alpha_max == hb_alpha_max(mu);
    }
    Ok(vec![
        CheckOutcome::at_most("gamma_branch_continuity", worst, tol),
        CheckOutcome::flag("alpha_max_specializations", exact),
    ])
}

/// Variance-reduction factor: exactly 1 at `β = 0`, within `tol` of
/// `(1−β)/(1+β)` at `k_limit`, and non-increasing in `k`.
pub fn check_variance_reduction(betas: &[f64], k_limit: u64, tol: f64) -> Result<Vec<CheckOutcome>, HarnessError> {
    let mut limit_err: f64 = 0.0;
    let mut monotone = variance_reduction_factor(0.0, k_limit)? == 1.0;
    for &b in betas {
        limit_err = limit_err.max((variance_reduction_factor(b, k_limit)? - (1.0 - b) / (1.0 + b)).abs());
        let mut prev = variance_reduction_factor(b, 0)?;
        monotone &= prev == 1.0;
        for k in 1..=k_limit {
            let v = variance_reduction_factor(b, k)?;
            monotone &= v <= prev;
            prev = v;
        }
    }
    Ok(vec![
        CheckOutcome::at_most("variance_reduction_limit", limit_err, tol),
        CheckOutcome::flag("variance_reduction_unit_then_monotone", monotone),
    ])
}

/// Scale of the `verify` suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyScale {
    pub mc_paths: u64,
    pub ito_paths: u64,
    pub quartic_seeds: u64,
    pub quartic_iterations: u64,
    pub warp_h: f64,
}

impl Default for VerifyScale {
    fn default() -> Self {
        Self {
            mc_paths: 2000,
            ito_paths: 10_000,
            quartic_seeds: 150,
            quartic_iterations: 2000,
            warp_h: 1e-4,
        }
    }
}

/// Columns of the verify report.
pub const REPORT_COLUMNS: [&str; 4] = ["check", "observed", "tolerance", "passed"];

/// Runs the whole suite on the current rayon pool.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<(Vec<CheckOutcome>, Vec<Trace>), HarnessError> {
    let tol = &cfg.tolerances;
    let scale = &cfg.verify;
    let seed = cfg.seed;
    let mc = scale.mc_paths as usize;
    let mut out = vec![
        check_discrete_weights(&[2.0, 3.0, 4.0, 100.0], 10_000, tol.weight_sum)?,
        check_continuous_weights(&quadrature_memories(), &[0.5, 1.0, 10.0, 100.0], tol.weight_quadrature)?,
        check_hb_sum(1000, 50, seed, tol.hb_sum)?,
        check_semi_implicit(&[0.1, 0.01], &[0.5, 1.0, 2.0], 1000, tol.semi_implicit)?,
        check_ito(&cfg.isometry.powers, &cfg.isometry.times, scale.ito_paths as usize, cfg.isometry.h, seed, tol.z_max)?,
    ];
    out.extend(check_constant_gradient(1e-3, tol.velocity)?);
    out.extend(check_velocity_variances(10.0, &[2.0, 5.0, 7.0], mc, 1e-3, seed, tol.z_max)?);
    out.extend(check_variance_ode_mc(1.0, 1.0, &[1.0, 5.0, 10.0], mc, 1e-3, seed, tol.z_max)?);
    out.extend(check_variance_ode_shape(100.0, 1e-3, 10.0)?);
    out.push(check_variance_linearity(1e-3, 1e-8)?);
    out.extend(check_memsgd_deterministic(&[2.0, 3.0, 4.0], 10_000)?);
    let (quartic, mut traces) = check_memsgd_quartic(scale.quartic_seeds, scale.quartic_iterations, 10, seed)?;
    out.push(quartic);
    out.push(check_warp(cfg.warp.p, cfg.warp.t_end, scale.warp_h, cfg.warp.n_checks as usize, tol.warp)?);
    out.extend(check_gamma(1000, seed, tol.gamma)?);
    out.extend(check_variance_reduction(&[0.5, 0.9, 0.99], 10_000, tol.variance_reduction)?);
    if !cfg.methods.is_empty() {
        traces.extend(run_optimize(cfg)?);
        super::run::sort_traces(&mut traces);
    }
    Ok((out, traces))
}

/// Files written by [`verify`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutput {
    pub checks: Vec<CheckOutcome>,
    pub files: Vec<PathBuf>,
}

impl VerifyOutput {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Runs the suite and writes `verify_report.csv` plus the experiment traces
/// into `dir`.
pub fn verify(cfg: &ExperimentConfig, dir: &Path) -> Result<VerifyOutput, HarnessError> {
    let (checks, traces) = run_suite(cfg)?;
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                fmt_f64(c.observed),
                fmt_f64(c.tolerance),
                c.passed.to_string(),
            ]
        })
        .collect();
    let report = dir.join("verify_report.csv");
    write_rows(&report, &REPORT_COLUMNS, &rows)?;
    let mut files = vec![report];
    let aggregates = aggregate(&traces);
    files.extend(emit(dir, "verify_traces", cfg, &traces, &aggregates, &cfg.output.formats)?.files);
    Ok(VerifyOutput { checks, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_checks_pass() {
        assert!(check_discrete_weights(&[2.0, 3.0], 500, 1e-12).unwrap().passed);
        assert!(check_continuous_weights(&quadrature_memories(), &[1.0, 10.0], 1e-8).unwrap().passed);
        assert!(check_hb_sum(100, 50, 1, 1e-12).unwrap().passed);
        assert!(check_semi_implicit(&[0.1], &[1.0], 1000, 1e-12).unwrap().passed);
        for c in check_gamma(100, 2, 1e-12).unwrap() {
            assert!(c.passed, "{c:?}");
        }
        for c in check_variance_reduction(&[0.9], 10_000, 1e-10).unwrap() {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn broken_tolerance_fails() {
        let c = check_semi_implicit(&[0.1], &[1.0], 10, -1.0).unwrap();
        assert!(!c.passed);
    }
}
