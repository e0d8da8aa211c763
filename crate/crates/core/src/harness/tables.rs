//! Tabular outputs of the non-trajectory subcommands.

use std::path::{Path, PathBuf};

use super::check::{BoundCheck, BoundReport};
use super::config::ExperimentConfig;
use super::emit::write_rows;
use super::HarnessError;
use crate::continuum::{integrate_variance_ode, ito_isometry_mc_grid, warp_equivalence_check};
use crate::theory::{fmt_f64, write_bound_table};

pub const VARIANCE_COLUMNS: [&str; 6] = ["model", "time", "p1", "p2", "p3", "variance_v"];
pub const ISOMETRY_COLUMNS: [&str; 7] = ["p", "time", "n_paths", "variance", "standard_error", "exact", "abs_z"];

/// Second moments `(E[X²], E[XV], E[V²])` of the configured models, one row
/// per sampled time. `variance_v` removes the squared deterministic mean of
/// `V`, which solves the same system with `σ = 0`.
pub fn variance_ode_table(cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf, HarnessError> {
    let s = &cfg.variance_ode;
    let mut rows = Vec::new();
    for &model in &s.models {
        let noisy = integrate_variance_ode(model, s.t0, s.t_end, s.h, s.lambda, s.sigma * s.sigma, &[], s.stride as usize)?;
        let mean = integrate_variance_ode(model, s.t0, s.t_end, s.h, s.lambda, 0.0, &[], s.stride as usize)?;
        for (a, b) in noisy.iter().zip(&mean) {
            rows.push(vec![
                model.label().to_string(),
                fmt_f64(a.t),
                fmt_f64(a.p1),
                fmt_f64(a.p2),
                fmt_f64(a.p3),
                fmt_f64(a.p3 - b.p3),
            ]);
        }
    }
    let path = dir.join("variance_ode.csv");
    write_rows(&path, &VARIANCE_COLUMNS, &rows)?;
    Ok(path)
}

/// Monte-Carlo variance of `∫₀ᵗ sᵖ dB` against `t^{2p+1}/(2p+1)`.
pub fn isometry_table(cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf, HarnessError> {
    let s = &cfg.isometry;
    let est = ito_isometry_mc_grid(&s.powers, &s.times, s.n_paths as usize, s.h, cfg.seed)?;
    let rows: Vec<Vec<String>> = est
        .iter()
        .map(|e| {
            vec![
                fmt_f64(e.p),
                fmt_f64(e.t),
                e.n_paths.to_string(),
                fmt_f64(e.variance),
                fmt_f64(e.standard_error),
                fmt_f64(e.exact),
                fmt_f64(e.z_score()),
            ]
        })
        .collect();
    let path = dir.join("isometry.csv");
    write_rows(&path, &ISOMETRY_COLUMNS, &rows)?;
    Ok(path)
}

/// Warped memory flow against the direct heavy-ball flow on the configured
/// problem, one row per check time and coordinate. Returns the path and the
/// largest discrepancy.
pub fn warp_table(cfg: &ExperimentConfig, dir: &Path) -> Result<(PathBuf, f64), HarnessError> {
    let obj = cfg.problem.build()?;
    let x0 = cfg.x0(obj.dim())?;
    let w = &cfg.warp;
    let r = warp_equivalence_check(obj.as_ref(), &x0, w.p, w.t_end, w.h, w.n_checks as usize)?;
    let mut rows = Vec::new();
    for s in &r.checks {
        for (i, (a, b)) in s.warped.iter().zip(&s.direct).enumerate() {
            rows.push(vec![
                fmt_f64(s.t),
                fmt_f64(s.tau),
                i.to_string(),
                fmt_f64(*a),
                fmt_f64(*b),
                fmt_f64((a - b).abs()),
            ]);
        }
    }
    let path = dir.join("warp.csv");
    write_rows(&path, &["time", "tau", "coord", "warped", "direct", "abs_diff"], &rows)?;
    Ok((path, r.discrepancy))
}

/// Configured bounds evaluated at the configured points.
pub fn rates_table(cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf, HarnessError> {
    let path = dir.join("rates.csv");
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let file = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    write_bound_table(std::io::BufWriter::new(file), &cfg.bounds, &cfg.rates.points)?;
    Ok(path)
}


pub const BOUND_CHECK_COLUMNS: [&str; 8] = [
    "method",
    "bound",
    "status",
    "points",
    "violations",
    "max_relative_excess",
    "first_violation",
    "reason",
];

/// One row per bound check.
pub fn bound_checks_table(checks: &[BoundCheck], path: &Path) -> Result<(), HarnessError> {
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            let mut row = vec![c.method.clone(), c.bound.to_string()];
            match &c.report {
                BoundReport::Checked {
                    points,
                    violations,
                    max_relative_excess,
                    first_violation,
                } => row.extend([
                    if *violations == 0 && *points > 0 { "holds" } else { "violated" }.to_string(),
                    points.to_string(),
                    violations.to_string(),
                    fmt_f64(*max_relative_excess),
                    first_violation.map(|i| i.to_string()).unwrap_or_default(),
                    String::new(),
                ]),
                BoundReport::CannotCheck { reason } => row.extend([
                    "cannot_check".to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    reason.clone(),
                ]),
            }
            row
        })
        .collect();
    write_rows(path, &BOUND_CHECK_COLUMNS, &rows)
}
