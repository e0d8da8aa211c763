use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::sde::{integrate_trajectory, sde_step, Dynamics, PathStatus, PhaseState, Record, SdeSpec};
use super::ContinuumError;
use crate::memory::MemoryFunction;
use crate::problems::Objective;

/// `τ(t) = t²/(4p)`, the clock change that turns the memory ODE with
/// `m(t) = t^p` into the heavy-ball ODE with viscosity `(2p−1)/t`.
pub fn time_warp_tau(t: f64, p: f64) -> f64 {
    t * t / (4.0 * p)
}

/// Viscosity numerator of the warped flow, `2p − 1`.
pub fn warped_viscosity(p: f64) -> f64 {
    2.0 * p - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WarpReport {
    pub p: f64,
    pub t_end: f64,
    pub h: f64,
    /// `sup ‖X_mg(τ(t)) − X_hb(t)‖` over the check times.
    pub discrepancy: f64,
    /// Check time where the supremum is attained.
    pub at: f64,
    pub checks: Vec<WarpSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WarpSample {
    pub t: f64,
    pub tau: f64,
    pub warped: Vec<f64>,
    pub direct: Vec<f64>,
}

/// Cubic Hermite interpolation of the position between two steps, with the
/// velocities as end slopes.
fn hermite(a: &PhaseState, b: &PhaseState, t: f64) -> Vec<f64> {
    let dt = b.t - a.t;
    let s = (t - a.t) / dt;
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..a.x.len())
        .map(|i| h00 * a.x[i] + h10 * dt * a.v[i] + h01 * b.x[i] + h11 * dt * b.v[i])
        .collect()
}

/// Integrates the memory ODE with `m = t^p` and the heavy-ball ODE with
/// viscosity `(2p−1)/t` from rest at `x0`, both noise-free with step `h`,
/// and compares `X_mg(τ(t))` with `X_hb(t)` at `n_checks` evenly spaced times
/// in `(0, t_end]`.
pub fn warp_equivalence_check(
    obj: &dyn Objective,
    x0: &[f64],
    p: f64,
    t_end: f64,
    h: f64,
    n_checks: usize,
) -> Result<WarpReport, ContinuumError> {
    if !(p > 1.0) {
        return Err(ContinuumError::Domain(format!("warp needs p > 1, got {p}")));
    }
    let n_checks = n_checks.max(1);
    let check_t: Vec<f64> = (1..=n_checks)
        .map(|i| t_end * i as f64 / n_checks as f64)
        .collect();
    let v0 = vec![0.0; x0.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let hb = SdeSpec::deterministic(Dynamics::hb_over_time(warped_viscosity(p)));
    let direct = integrate_trajectory(obj, &hb, x0, &v0, t_end, h, &mut rng, &Record::Times(check_t.clone()))?;
    if let PathStatus::Diverged { t } = direct.status {
        return Err(ContinuumError::Diverged { what: "heavy-ball flow", t });
    }

    let mg = SdeSpec::deterministic(Dynamics::mg(MemoryFunction::polynomial(p)?));
    mg.validate(obj.dim())?;
    let taus: Vec<f64> = check_t.iter().map(|t| time_warp_tau(*t, p)).collect();
    let grid = mg.grid(taus[taus.len() - 1], h)?;
    let mut state = PhaseState::new(x0.to_vec(), v0, mg.t_start);
    let mut warped = Vec::with_capacity(taus.len());
    let mut times = grid.iter();
    times.next();
    for t_next in times {
        let mut next = sde_step(&state, &mg, obj, t_next - state.t, &mut rng)?;
        next.t = t_next;
        if !next.is_finite() {
            return Err(ContinuumError::Diverged { what: "memory flow", t: t_next });
        }
        while warped.len() < taus.len() && taus[warped.len()] <= t_next {
            let tau = taus[warped.len()];
            warped.push(if tau <= state.t { state.x.clone() } else { hermite(&state, &next, tau) });
        }
        state = next;
    }
    while warped.len() < taus.len() {
        warped.push(state.x.clone());
    }

    let mut report = WarpReport {
        p,
        t_end,
        h,
        discrepancy: 0.0,
        at: check_t[0],
        checks: Vec::with_capacity(n_checks),
    };
    for ((t, tau), (w, d)) in check_t.iter().zip(&taus).zip(warped.into_iter().zip(&direct.samples)) {
        let gap = w
            .iter()
            .zip(&d.x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if gap > report.discrepancy {
            report.discrepancy = gap;
            report.at = *t;
        }
        report.checks.push(WarpSample {
            t: *t,
            tau: *tau,
            warped: w,
            direct: d.x.clone(),
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{ConstantField, QuadraticDiag};

    #[test]
    fn tau_values() {
        assert_eq!(time_warp_tau(4.0, 2.0), 2.0);
        assert_eq!(time_warp_tau(0.0, 3.0), 0.0);
        assert_eq!(time_warp_tau(3.0, 2.0), 9.0 / 8.0);
        assert_eq!(warped_viscosity(1.5), 2.0);
        assert_eq!(warped_viscosity(2.0), 3.0);
    }

    #[test]
    fn flat_objective_has_no_discrepancy() {
        let f = ConstantField::new(vec![0.0, 0.0]);
        let r = warp_equivalence_check(&f, &[1.0, -1.0], 2.0, 5.0, 1e-3, 10).unwrap();
        assert_eq!(r.discrepancy, 0.0);
    }

    #[test]
    fn coarse_warp_is_close() {
        let q = QuadraticDiag::new(vec![2e-2, 5e-3]).unwrap();
        let r = warp_equivalence_check(&q, &[1.0, 1.0], 2.0, 10.0, 1e-3, 50).unwrap();
        assert!(r.discrepancy < 1e-2, "{}", r.discrepancy);
    }
}
