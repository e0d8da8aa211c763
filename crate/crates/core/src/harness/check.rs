use serde::Serialize;

use super::run::{aggregate, Trace};
use crate::continuum::{Dynamics, Viscosity};
use crate::memory::MemoryFunction;
use crate::optimizers::Method;
use crate::theory::BoundSpec;

/// Relative slack absorbing floating-point roundoff where a bound is tight
/// (MemSGD at `k = 0` holds with equality).
pub const ROUNDOFF_SLACK: f64 = 1e-12;

/// What produced the traces being checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunSource {
    Discrete(Method),
    Continuous(Dynamics),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BoundReport {
    Checked {
        points: usize,
        violations: usize,
        /// `max (lhs − bound)/bound`; negative when every point holds.
        max_relative_excess: f64,
        first_violation: Option<u64>,
    },
    CannotCheck { reason: String },
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        matches!(self, Self::Checked { violations: 0, points, .. } if *points > 0)
    }

    fn cannot(reason: impl Into<String>) -> Self {
        Self::CannotCheck {
            reason: reason.into(),
        }
    }
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Whether `bound` is a statement about runs of `source`.
fn applies(bound: &BoundSpec, source: &RunSource) -> bool {
    match (bound, source) {
        (BoundSpec::MemSgd { p, eta, .. }, RunSource::Discrete(Method::MemSgd { lr, p: q })) => {
            same(*p, q.get()) && same(*eta, *lr)
        }
        (
            BoundSpec::PolyContinuous { p, .. },
            RunSource::Continuous(Dynamics::Mg {
                memory: MemoryFunction::Polynomial { p: q },
            }),
        ) => same(*p, *q),
        (
            BoundSpec::ExpCesaro { alpha, .. } | BoundSpec::StronglyConvexMg { alpha, .. },
            RunSource::Continuous(Dynamics::Mg {
                memory: MemoryFunction::Exponential { alpha: a },
            }),
        ) => same(*alpha, *a),
        (
            BoundSpec::StronglyConvexHb { alpha, .. },
            RunSource::Continuous(Dynamics::HbOde {
                viscosity: Viscosity::Constant { alpha: a },
            }),
        ) => same(*alpha, *a),
        _ => false,
    }
}

/// Compares the across-seed mean suboptimality with `bound` at every
/// aggregated index.
///
/// A bound on `E[f − f*]` is checked one-sidedly against `mean − CI₉₅`, so
/// sampling noise alone does not flag a violation; with one seed this is the
/// pathwise value. The Cesàro bound is compared with the running time
/// average of the mean gap (trapezoid rule over the recorded times).
pub fn check_bounds(traces: &[Trace], source: &RunSource, bound: &BoundSpec) -> BoundReport {
    if let Err(e) = bound.validate() {
        return BoundReport::cannot(format!("invalid bound: {e}"));
    }
    if !applies(bound, source) {
        return BoundReport::cannot(format!(
            "{} bound does not describe {}",
            bound.label(),
            source.label()
        ));
    }
    if traces.is_empty() {
        return BoundReport::cannot("no traces");
    }
    let points = aggregate(traces);
    if points.iter().any(|p| p.f_gap_mean.is_none()) {
        return BoundReport::cannot("problem declares no f*, so there is no gap to bound");
    }
    let cesaro = matches!(bound, BoundSpec::ExpCesaro { .. });
    let mut checked = 0;
    let mut violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    let mut first = None;
    let (mut area, mut prev): (f64, Option<(f64, f64)>) = (0.0, None);
    for p in &points {
        let lower = p.f_gap_mean.unwrap_or(f64::NAN) - p.f_gap_ci95.unwrap_or(0.0);
        let at = if bound.is_discrete() {
            p.index as f64
        } else {
            match p.time {
                Some(t) => t,
                None => return BoundReport::cannot("continuous bound needs timed records"),
            }
        };
        let lhs = if cesaro {
            if let Some((t0, g0)) = prev {
                area += 0.5 * (at - t0) * (g0 + lower);
            }
            prev = Some((at, lower));
            if at <= 0.0 || area == 0.0 {
                continue;
            }
            area / at
        } else {
            lower
        };
        let Ok(b) = bound.evaluate(at) else { continue };
        checked += 1;
        let excess = (lhs - b) / b.abs().max(f64::MIN_POSITIVE);
        max_excess = max_excess.max(excess);
        if lhs > b + ROUNDOFF_SLACK * b.abs() {
            violations += 1;
            first.get_or_insert(p.index);
        }
    }
    BoundReport::Checked {
        points: checked,
        violations,
        max_relative_excess: max_excess,
        first_violation: first,
    }
}

impl RunSource {
    pub fn label(&self) -> String {
        match self {
            Self::Discrete(m) => m.label(),
            Self::Continuous(d) => d.label(),
        }
    }
}

/// One bound checked against the runs of one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub method: String,
    pub bound: &'static str,
    pub report: BoundReport,
}

/// Every configured bound against every source it describes. Pairs where
/// the bound is about a different method are skipped; a bound that matches
/// no source at all is reported as `CannotCheck`.
pub fn check_configured(traces: &[Trace], sources: &[RunSource], bounds: &[BoundSpec]) -> Vec<BoundCheck> {
    let mut out = Vec::new();
    for bound in bounds {
        let before = out.len();
        for src in sources {
            if !applies(bound, src) {
                continue;
            }
            let label = src.label();
            let mine: Vec<Trace> = traces.iter().filter(|t| t.method == label).cloned().collect();
            out.push(BoundCheck {
                method: label,
                bound: bound.label(),
                report: check_bounds(&mine, src, bound),
            });
        }
        if out.len() == before {
            out.push(BoundCheck {
                method: String::new(),
                bound: bound.label(),
                report: BoundReport::cannot("no configured method matches this bound"),
            });
        }
    }
    out
}
