use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use super::ContinuumError;
use crate::memory::MemoryFunction;
use crate::problems::{Objective, Volatility};

/// Position, velocity and time of a second-order flow in phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl PhaseState {
    pub fn new(x: Vec<f64>, v: Vec<f64>, t: f64) -> Self {
        Self { x, v, t }
    }

    pub fn at_rest(x: Vec<f64>, t: f64) -> Self {
        let v = vec![0.0; x.len()];
        Self { x, v, t }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().chain(&self.v).all(|v| v.is_finite())
    }
}

/// Friction of the heavy-ball ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Viscosity {
    /// `a(t) = alpha`.
    Constant { alpha: f64 },
    /// `a(t) = c/t`.
    OverTime { c: f64 },
}

impl Viscosity {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Self::Constant { alpha } => alpha,
            Self::OverTime { c } => c / t,
        }
    }
}

/// Which second-order flow to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dynamics {
    /// `dV = −a(t)V dt − ∇f dt + σ dB`.
    HbOde { viscosity: Viscosity },
    /// `dV = −c(t)V dt − c(t)[∇f dt + σ dB]` with `c = ṁ/m`.
    /// Instantaneous memory degenerates to the gradient flow `dX = −∇f dt − σ dB`.
    Mg { memory: MemoryFunction },
    /// `dV = −(3/t)V dt − ∇f dt − σ dB`.
    Nesterov,
}

/// Coefficients of the velocity equation at one time:
/// `dV = −drag·V dt − grad·∇f dt − noise·σ dB`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub drag: f64,
    pub grad: f64,
    pub noise: f64,
}

impl Dynamics {
    pub fn hb_constant(alpha: f64) -> Self {
        Self::HbOde {
            viscosity: Viscosity::Constant { alpha },
        }
    }

    pub fn hb_over_time(c: f64) -> Self {
        Self::HbOde {
            viscosity: Viscosity::OverTime { c },
        }
    }

    pub fn mg(memory: MemoryFunction) -> Self {
        Self::Mg { memory }
    }

    pub fn label(&self) -> String {
        match self {
            Self::HbOde {
                viscosity: Viscosity::Constant { alpha },
            } => format!("hb_ode(a={alpha})"),
            Self::HbOde {
                viscosity: Viscosity::OverTime { c },
            } => format!("hb_ode(a={c}/t)"),
            Self::Mg { memory } => match memory {
                MemoryFunction::Decaying => "mg(decaying)".into(),
                MemoryFunction::Polynomial { p } => format!("mg(t^{p})"),
                MemoryFunction::Exponential { alpha } => format!("mg(exp,alpha={alpha})"),
                MemoryFunction::SuperExponential { alpha } => {
                    format!("mg(super_exp,alpha={alpha})")
                }
                MemoryFunction::Instantaneous => "mg(instantaneous)".into(),
            },
            Self::Nesterov => "nesterov".into(),
        }
    }

    pub fn validate(&self) -> Result<(), ContinuumError> {
        match self {
            Self::HbOde { viscosity } => {
                let v = match viscosity {
                    Viscosity::Constant { alpha } => *alpha,
                    Viscosity::OverTime { c } => *c,
                };
                if !(v.is_finite() && v >= 0.0) {
                    return Err(ContinuumError::Domain(format!("viscosity must be >= 0, got {v}")));
                }
                Ok(())
            }
            Self::Mg { memory } => Ok(memory.validate()?),
            Self::Nesterov => Ok(()),
        }
    }

    /// `lim t·drag(t)` as `t → 0`, zero when the drag is bounded at the origin.
    /// Sizes the geometric warm-up of the time grid.
    pub fn singularity(&self) -> f64 {
        match self {
            Self::HbOde {
                viscosity: Viscosity::Constant { .. },
            } => 0.0,
            Self::HbOde {
                viscosity: Viscosity::OverTime { c },
            } => *c,
            Self::Mg { memory } => match memory {
                MemoryFunction::Polynomial { p } => *p,
                MemoryFunction::SuperExponential { alpha } => *alpha,
                MemoryFunction::Decaying | MemoryFunction::Exponential { .. } => 1.0,
                MemoryFunction::Instantaneous => 0.0,
            },
            Self::Nesterov => 3.0,
        }
    }

    fn is_gradient_flow(&self) -> bool {
        matches!(
            self,
            Self::Mg {
                memory: MemoryFunction::Instantaneous
            }
        )
    }

    pub fn coefficients(&self, t: f64) -> Result<Coefficients, ContinuumError> {
        Ok(match self {
            Self::HbOde { viscosity } => Coefficients {
                drag: viscosity.at(t),
                grad: 1.0,
                noise: -1.0,
            },
            Self::Mg { memory } => {
                let c = memory.ode_coefficient(t)?;
                Coefficients {
                    drag: c,
                    grad: c,
                    noise: c,
                }
            }
            Self::Nesterov => Coefficients {
                drag: 3.0 / t,
                grad: 1.0,
                noise: 1.0,
            },
        })
    }
}

/// Deterministic semi-implicit Euler step of the heavy-ball ODE:
/// `v' = v + h(−a(t)v − ∇f(x))`, `x' = x + h v'`.
pub fn semi_implicit_euler_step(
    state: &PhaseState,
    viscosity: Viscosity,
    obj: &dyn Objective,
    h: f64,
) -> PhaseState {
    let a = viscosity.at(state.t);
    let g = obj.gradient(&state.x);
    let v: Vec<f64> = state
        .v
        .iter()
        .zip(&g)
        .map(|(v, g)| v + h * (-a * v - g))
        .collect();
    let x = state.x.iter().zip(&v).map(|(x, v)| x + h * v).collect();
    PhaseState {
        x,
        v,
        t: state.t + h,
    }
}

/// A stochastic flow: dynamics plus constant volatility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeSpec {
    pub dynamics: Dynamics,
    #[serde(default = "no_noise")]
    pub sigma: Volatility,
    #[serde(default = "default_start")]
    pub t_start: f64,
}

fn no_noise() -> Volatility {
    Volatility::Scalar(0.0)
}

/// Default start time for flows whose coefficients blow up at zero.
pub const DEFAULT_T_START: f64 = 1e-12;

fn default_start() -> f64 {
    DEFAULT_T_START
}

impl SdeSpec {
    pub fn new(dynamics: Dynamics, sigma: Volatility) -> Self {
        let t_start = if dynamics.singularity() > 0.0 {
            DEFAULT_T_START
        } else {
            0.0
        };
        Self {
            dynamics,
            sigma,
            t_start,
        }
    }

    pub fn deterministic(dynamics: Dynamics) -> Self {
        Self::new(dynamics, no_noise())
    }

    pub fn with_start(mut self, t_start: f64) -> Self {
        self.t_start = t_start;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<(), ContinuumError> {
        self.dynamics.validate()?;
        self.sigma.check_dim(dim)?;
        if !(self.t_start.is_finite() && self.t_start >= 0.0) {
            return Err(ContinuumError::Domain(format!(
                "start time must be >= 0, got {}",
                self.t_start
            )));
        }
        if self.dynamics.singularity() > 0.0 && self.t_start <= 0.0 {
            return Err(ContinuumError::Domain(format!(
                "{} is singular at t = 0; start at some t > 0",
                self.dynamics.label()
            )));
        }
        Ok(())
    }

    pub fn grid(&self, t_end: f64, h: f64) -> Result<TimeGrid, ContinuumError> {
        TimeGrid::new(self.t_start, t_end, h, self.dynamics.singularity())
    }
}

/// Semi-implicit Euler–Maruyama step from `state.t` to `state.t + h`.
///
/// The velocity takes the drift at `(x, t)` plus the Brownian increment
/// `√h·ξ`, then the position moves with the new velocity. For a constant
/// volatility this is also the Milstein scheme. No random numbers are drawn
/// when `σ = 0`, so noise-free paths do not depend on the generator.
pub fn sde_step<R: Rng + ?Sized>(
    state: &PhaseState,
    spec: &SdeSpec,
    obj: &dyn Objective,
    h: f64,
    rng: &mut R,
) -> Result<PhaseState, ContinuumError> {
    let g = obj.gradient(&state.x);
    let noise = if spec.sigma.is_zero() {
        None
    } else {
        let xi: Vec<f64> = (0..g.len()).map(|_| rng.sample(StandardNormal)).collect();
        Some(spec.sigma.apply(&xi))
    };
    let dw = h.sqrt();
    if spec.dynamics.is_gradient_flow() {
        let x = state
            .x
            .iter()
            .enumerate()
            .map(|(i, x)| x - h * g[i] - noise.as_ref().map_or(0.0, |n| dw * n[i]))
            .collect();
        let v = g.iter().map(|g| -g).collect();
        return Ok(PhaseState {
            x,
            v,
            t: state.t + h,
        });
    }
    let c = spec.dynamics.coefficients(state.t)?;
    let v: Vec<f64> = state
        .v
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut out = v - h * (c.drag * v + c.grad * g[i]);
            if let Some(n) = &noise {
                out -= c.noise * dw * n[i];
            }
            out
        })
        .collect();
    let x = state.x.iter().zip(&v).map(|(x, v)| x + h * v).collect();
    Ok(PhaseState {
        x,
        v,
        t: state.t + h,
    })
}

/// What [`integrate_trajectory`] keeps.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    /// Every `n`-th grid point plus the last one.
    Stride(usize),
    /// The grid point nearest to each requested time (ascending).
    Times(Vec<f64>),
    /// Only the final state.
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PathStatus {
    Completed,
    /// First grid time at which the state stopped being finite.
    Diverged { t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub samples: Vec<PhaseState>,
    pub status: PathStatus,
}

impl Path {
    pub fn last(&self) -> Option<&PhaseState> {
        self.samples.last()
    }
}

/// Integrates from `(x0, v0)` at the spec's start time to `t_end`.
pub fn integrate_trajectory<R: Rng + ?Sized>(
    obj: &dyn Objective,
    spec: &SdeSpec,
    x0: &[f64],
    v0: &[f64],
    t_end: f64,
    h: f64,
    rng: &mut R,
    record: &Record,
) -> Result<Path, ContinuumError> {
    let d = obj.dim();
    if x0.len() != d || v0.len() != d {
        return Err(ContinuumError::Dimension {
            expected: d,
            got: if x0.len() != d { x0.len() } else { v0.len() },
        });
    }
    spec.validate(d)?;
    let grid = spec.grid(t_end, h)?;
    let mut state = PhaseState::new(x0.to_vec(), v0.to_vec(), spec.t_start);
    let mut samples = Vec::new();
    let targets: &[f64] = match record {
        Record::Times(ts) => ts,
        _ => &[],
    };
    let mut next_target = 0;
    while next_target < targets.len() && targets[next_target] <= state.t {
        samples.push(state.clone());
        next_target += 1;
    }
    if matches!(record, Record::Stride(_)) {
        samples.push(state.clone());
    }
    let mut status = PathStatus::Completed;
    let mut times = grid.iter();
    times.next();
    for (i, t_next) in times.enumerate() {
        let step = t_next - state.t;
        let mut new = sde_step(&state, spec, obj, step, rng)?;
        new.t = t_next;
        if !new.is_finite() {
            status = PathStatus::Diverged { t: t_next };
            break;
        }
        while next_target < targets.len() && targets[next_target] <= t_next {
            let tgt = targets[next_target];
            let nearer = if tgt - state.t < t_next - tgt { &state } else { &new };
            samples.push(nearer.clone());
            next_target += 1;
        }
        state = new;
        if let Record::Stride(n) = record {
            if (i + 1) % (*n).max(1) == 0 {
                samples.push(state.clone());
            }
        }
    }
    match record {
        Record::Final => samples.push(state),
        Record::Stride(_) if samples.last().map(|s| s.t) != Some(state.t) => samples.push(state),
        _ => {}
    }
    Ok(Path { samples, status })
}

/// Independent paths run in parallel on the current rayon pool. Path `i`
/// draws from ChaCha stream `i` of `seed`, so results do not depend on the
/// thread count.
pub fn ensemble(
    obj: &dyn Objective,
    spec: &SdeSpec,
    x0: &[f64],
    v0: &[f64],
    t_end: f64,
    h: f64,
    times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Path>, ContinuumError> {
    let record = Record::Times(times.to_vec());
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            integrate_trajectory(obj, spec, x0, v0, t_end, h, &mut rng, &record)
        })
        .collect()
}

/// Velocity coordinate `coord` of sample `index` across an ensemble, skipping
/// diverged paths that never reached it.
pub fn velocity_samples(paths: &[Path], index: usize, coord: usize) -> Vec<f64> {
    paths
        .iter()
        .filter_map(|p| p.samples.get(index).map(|s| s.v[coord]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::{hb_step, OptimizerState};
    use crate::problems::{ConstantField, QuadraticDiag};

    fn fig2() -> QuadraticDiag {
        QuadraticDiag::new(vec![2e-2, 5e-3]).unwrap()
    }

    #[test]
    fn semi_implicit_matches_heavy_ball() {
        let q = fig2();
        let (h, alpha): (f64, f64) = (0.1, 1.0);
        let (beta, eta) = (1.0 - h * alpha, h * h);
        assert!((beta - 0.9).abs() < 1e-15 && (eta - 0.01).abs() < 1e-15);
        let mut s = PhaseState::at_rest(vec![1.0, 1.0], 0.0);
        let mut o = OptimizerState::new(vec![1.0, 1.0]);
        for _ in 0..1000 {
            s = semi_implicit_euler_step(&s, Viscosity::Constant { alpha }, &q, h);
            o = hb_step(&o, &q.gradient(&o.x), eta, beta).unwrap().state;
            for (a, b) in s.x.iter().zip(&o.x) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_gradient_freezes_state() {
        let f = ConstantField::new(vec![0.0, 0.0]);
        let s0 = PhaseState::at_rest(vec![0.3, -0.2], 0.0);
        let s = semi_implicit_euler_step(&s0, Viscosity::Constant { alpha: 1.0 }, &f, 0.1);
        assert_eq!(s.x, s0.x);
        assert_eq!(s.v, s0.v);
    }

    #[test]
    fn noise_free_paths_ignore_the_generator() {
        let q = fig2();
        let spec = SdeSpec::deterministic(Dynamics::mg(MemoryFunction::quadratic()));
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            integrate_trajectory(&q, &spec, &[1.0, 1.0], &[0.0, 0.0], 5.0, 1e-3, &mut rng, &Record::Final)
                .unwrap()
        };
        assert_eq!(run(1), run(2));
    }

    #[test]
    fn constant_gradient_velocities() {
        let f = ConstantField::new(vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mg = SdeSpec::deterministic(Dynamics::mg(MemoryFunction::quadratic()));
        let p = integrate_trajectory(&f, &mg, &[0.0], &[0.0], 10.0, 1e-3, &mut rng, &Record::Final)
            .unwrap();
        assert!((p.last().unwrap().v[0] + 1.0).abs() < 1e-2);
        let nag = SdeSpec::deterministic(Dynamics::Nesterov);
        let p = integrate_trajectory(&f, &nag, &[0.0], &[0.0], 4.0, 1e-3, &mut rng, &Record::Final)
            .unwrap();
        let last = p.last().unwrap();
        assert!((last.t - 4.0).abs() < 1e-12);
        assert!((last.v[0] + 1.0).abs() < 1e-2);
    }

    #[test]
    fn memory_velocity_settles_on_minus_the_gradient() {
        // Closed form for a constant gradient c: V(t) = −c·(1 − m(ε)/m(t)).
        let f = ConstantField::new(vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let times: Vec<f64> = (0..=50).map(|i| 5.0 + 0.1 * i as f64).collect();
        for memory in [
            MemoryFunction::linear(),
            MemoryFunction::quadratic(),
            MemoryFunction::exponential(1.0).unwrap(),
            MemoryFunction::Decaying,
            MemoryFunction::super_exponential(1.0).unwrap(),
        ] {
            let spec = SdeSpec::deterministic(Dynamics::mg(memory));
            let p = integrate_trajectory(
                &f,
                &spec,
                &[0.0],
                &[0.0],
                10.0,
                1e-3,
                &mut rng,
                &Record::Times(times.clone()),
            )
            .unwrap();
            let sup = p.samples.iter().map(|s| (s.v[0] + 1.0).abs()).fold(0.0, f64::max);
            assert!(sup < 1e-2, "{memory:?}: {sup}");
        }
    }

    #[test]
    fn counterexample_selects_bounded_branch() {
        let f = ConstantField::new(vec![1.0]);
        let spec = SdeSpec::deterministic(Dynamics::mg(MemoryFunction::quadratic()));
        let eps = spec.t_start;
        let times: Vec<f64> = (0..=90).map(|i| 1.0 + 0.1 * i as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = integrate_trajectory(&f, &spec, &[2.0], &[0.0], 10.0, 1e-3, &mut rng, &Record::Times(times))
            .unwrap();
        for s in &p.samples {
            assert!((s.x[0] - (2.0 - (s.t - eps))).abs() < 1e-2, "{} {}", s.t, s.x[0]);
        }
    }

    #[test]
    fn start_time_barely_matters() {
        let q = fig2();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let run = |eps: f64, rng: &mut ChaCha8Rng| {
            let spec = SdeSpec::deterministic(Dynamics::mg(MemoryFunction::linear())).with_start(eps);
            integrate_trajectory(&q, &spec, &[1.0, 1.0], &[0.0, 0.0], 10.0, 1e-3, rng, &Record::Final)
                .unwrap()
                .last()
                .unwrap()
                .clone()
        };
        let a = run(1e-12, &mut rng);
        let b = run(1e-10, &mut rng);
        for (x, y) in a.x.iter().zip(&b.x) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn fast_exponential_forgetting_tracks_gradient_flow() {
        let q = fig2();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = SdeSpec::deterministic(Dynamics::mg(MemoryFunction::exponential(200.0).unwrap()));
        let times = [1.0, 5.0, 10.0, 20.0];
        let p = integrate_trajectory(&q, &spec, &[1.0, 1.0], &[0.0, 0.0], 20.0, 1e-3, &mut rng, &Record::Times(times.to_vec()))
            .unwrap();
        // Oracle: gradient flow of Σ cᵢxᵢ², solved exactly.
        for s in &p.samples {
            let exact = [(-4e-2 * s.t).exp(), (-1e-2 * s.t).exp()];
            for (a, b) in s.x.iter().zip(exact) {
                assert!((a - b).abs() < 5e-2);
            }
        }
    }

    #[test]
    fn divergence_is_flagged() {
        let q = QuadraticDiag::new(vec![1e3]).unwrap();
        let spec = SdeSpec::deterministic(Dynamics::hb_constant(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = integrate_trajectory(&q, &spec, &[1.0], &[0.0], 1e4, 1.0, &mut rng, &Record::Stride(10))
            .unwrap();
        assert!(matches!(p.status, PathStatus::Diverged { .. }));
        assert!(p.samples.iter().all(PhaseState::is_finite));
    }

    #[test]
    fn ensemble_independent_of_thread_count() {
        let q = fig2();
        let spec = SdeSpec::new(Dynamics::Nesterov, Volatility::Scalar(0.1));
        let go = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| ensemble(&q, &spec, &[1.0, 1.0], &[0.0, 0.0], 1.0, 1e-2, &[0.5, 1.0], 20, 7).unwrap())
        };
        assert_eq!(go(1), go(3));
    }
}
