use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::ContinuumError;
use crate::stats::Summary;

/// `Var ∫₀ᵗ s^p dB(s) = t^{2p+1}/(2p+1)`.
pub fn ito_variance(p: f64, t: f64) -> f64 {
    t.powf(2.0 * p + 1.0) / (2.0 * p + 1.0)
}

/// Monte-Carlo estimate of `Var ∫₀ᵗ s^p dB(s)` for one `(p, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsometryEstimate {
    pub p: f64,
    pub t: f64,
    pub n_paths: usize,
    pub variance: f64,
    pub standard_error: f64,
    pub exact: f64,
}

impl IsometryEstimate {
    /// `|variance − exact|` in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.variance - self.exact).abs() / self.standard_error
    }
}

fn check(powers: &[f64], times: &[f64], n_paths: usize, h: f64) -> Result<(), ContinuumError> {
    if n_paths < 1000 {
        return Err(ContinuumError::Domain(format!("need at least 1000 paths, got {n_paths}")));
    }
    if !(h > 0.0) {
        return Err(ContinuumError::Domain(format!("step h must be > 0, got {h}")));
    }
    if let Some(p) = powers.iter().find(|p| !(**p >= 0.0)) {
        return Err(ContinuumError::Domain(format!("power p must be >= 0, got {p}")));
    }
    if let Some(t) = times.iter().find(|t| !(**t > 0.0)) {
        return Err(ContinuumError::Domain(format!("time t must be > 0, got {t}")));
    }
    Ok(())
}

/// Left-point sums `Σ sᵢ^p ΔBᵢ` for every power, read off at the lattice
/// indices `marks` of one Brownian path.
fn one_path<R: Rng + ?Sized>(powers: &[f64], marks: &[u64], h: f64, rng: &mut R) -> Vec<f64> {
    let n_steps = marks.iter().copied().max().unwrap_or(0);
    let sqrt_h = h.sqrt();
    let mut acc = vec![0.0; powers.len()];
    let mut out = vec![0.0; powers.len() * marks.len()];
    let record = |i: u64, acc: &[f64], out: &mut [f64]| {
        for (m, _) in marks.iter().enumerate().filter(|(_, mk)| **mk == i) {
            out[m * powers.len()..(m + 1) * powers.len()].copy_from_slice(acc);
        }
    };
    record(0, &acc, &mut out);
    for i in 0..n_steps {
        let s = i as f64 * h;
        let db: f64 = rng.sample::<f64, _>(StandardNormal) * sqrt_h;
        for (a, p) in acc.iter_mut().zip(powers) {
            *a += if *p == 0.0 { 1.0 } else { s.powf(*p) } * db;
        }
        record(i + 1, &acc, &mut out);
    }
    out
}

fn marks_for(times: &[f64], h: f64) -> Vec<u64> {
    times.iter().map(|t| (t / h).round() as u64).collect()
}

/// Simulates `∫₀ᵗ s^p dB(s)` by the left-point sum on the lattice `i·h` and
/// returns its sample variance with the standard error of that variance.
pub fn ito_isometry_mc<R: Rng + ?Sized>(
    p: f64,
    t: f64,
    n_paths: usize,
    h: f64,
    rng: &mut R,
) -> Result<IsometryEstimate, ContinuumError> {
    check(&[p], &[t], n_paths, h)?;
    let marks = marks_for(&[t], h);
    let values: Vec<f64> = (0..n_paths)
        .map(|_| one_path(&[p], &marks, h, rng)[0])
        .collect();
    let s = Summary::of(&values);
    Ok(IsometryEstimate {
        p,
        t,
        n_paths,
        variance: s.variance,
        standard_error: s.variance_se,
        exact: ito_variance(p, t),
    })
}

/// Paths per random stream in [`ito_isometry_mc_grid`].
const CHUNK: usize = 1024;

/// All `(p, t)` combinations from shared Brownian paths, in parallel.
///
/// Paths are generated in fixed chunks, chunk `c` using ChaCha stream `c` of
/// `seed`, so the estimates are identical for every thread count. Results are
/// ordered by time, then power.
pub fn ito_isometry_mc_grid(
    powers: &[f64],
    times: &[f64],
    n_paths: usize,
    h: f64,
    seed: u64,
) -> Result<Vec<IsometryEstimate>, ContinuumError> {
    check(powers, times, n_paths, h)?;
    let marks = marks_for(times, h);
    let n_chunks = n_paths.div_ceil(CHUNK);
    let chunks: Vec<Vec<Vec<f64>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(n_paths - c * CHUNK);
            (0..len).map(|_| one_path(powers, &marks, h, &mut rng)).collect()
        })
        .collect();
    let paths: Vec<&Vec<f64>> = chunks.iter().flatten().collect();
    let mut out = Vec::with_capacity(powers.len() * times.len());
    for (m, t) in times.iter().enumerate() {
        for (j, p) in powers.iter().enumerate() {
            let values: Vec<f64> = paths.iter().map(|v| v[m * powers.len() + j]).collect();
            let s = Summary::of(&values);
            out.push(IsometryEstimate {
                p: *p,
                t: *t,
                n_paths,
                variance: s.variance,
                standard_error: s.variance_se,
                exact: ito_variance(*p, *t),
            });
        }
    }
    Ok(out)
}
