use super::ContinuumError;

/// Integration times from `t_start` to `t_end`.
///
/// Flows whose drag behaves like `s/t` near the origin cannot take a fixed
/// step `h` from a tiny start time: the first explicit steps would multiply
/// the velocity by `1 − s·h/t`. Such grids begin with a geometric warm-up
/// `t_start·qⁱ` (ratio at most `1 + r`, with `r·s ≤ 0.3`) that ends exactly
/// on the uniform point `n₀·h`, `n₀ = ⌈1/r⌉`. From there the points are `n·h`,
/// with `t_end` appended if it is off the lattice. Regular flows use the
/// plain lattice `t_start + n·h`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    warmup: Vec<f64>,
    base: f64,
    h: f64,
    n_first: u64,
    n_last: u64,
    tail: Option<f64>,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, h: f64, singularity: f64) -> Result<Self, ContinuumError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(ContinuumError::Domain(format!("step h must be > 0, got {h}")));
        }
        if !(t_end > t_start) || !t_end.is_finite() {
            return Err(ContinuumError::Domain(format!(
                "end time {t_end} must exceed start time {t_start}"
            )));
        }
        let mut warmup = vec![t_start];
        let mut base = t_start;
        let mut n_first = 1;
        if singularity > 0.0 && t_start > 0.0 {
            let r = (0.3 / singularity).min(0.1);
            let n0 = (1.0 / r).ceil() as u64;
            let t0 = n0 as f64 * h;
            if t_start < t0 {
                let stop = t0.min(t_end);
                let n_geo = ((stop / t_start).ln() / r.ln_1p()).ceil().max(1.0) as u64;
                let q = (stop / t_start).powf(1.0 / n_geo as f64);
                warmup.extend((1..n_geo).map(|i| t_start * q.powi(i as i32)));
                if stop < t0 {
                    warmup.push(t_end);
                    return Ok(Self {
                        warmup,
                        base: 0.0,
                        h,
                        n_first: 1,
                        n_last: 0,
                        tail: None,
                    });
                }
                base = 0.0;
                n_first = n0;
            }
        }
        let span = (t_end - base) / h;
        let mut n_last = (span + 1e-9).floor() as u64;
        let mut tail = None;
        if base + n_last as f64 * h > t_end {
            n_last -= 1;
        }
        if (base + n_last as f64 * h) < t_end - 1e-9 * h {
            tail = Some(t_end);
        }
        Ok(Self {
            warmup,
            base,
            h,
            n_first,
            n_last,
            tail,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        let (base, h) = (self.base, self.h);
        self.warmup
            .iter()
            .copied()
            .chain((self.n_first..=self.n_last).map(move |n| base + n as f64 * h))
            .chain(self.tail)
    }

    pub fn len(&self) -> usize {
        self.warmup.len()
            + (self.n_last + 1).saturating_sub(self.n_first) as usize
            + usize::from(self.tail.is_some())
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_grid_is_a_lattice() {
        let g = TimeGrid::new(0.0, 1.0, 0.1, 0.0).unwrap();
        let ts: Vec<f64> = g.iter().collect();
        assert_eq!(ts.len(), 11);
        assert_eq!(g.len(), 11);
        assert!((ts[10] - 1.0).abs() < 1e-15);
        let g = TimeGrid::new(0.0, 1.05, 0.1, 0.0).unwrap();
        assert_eq!(g.iter().last(), Some(1.05));
    }

    #[test]
    fn warmup_is_geometric_and_joins_the_lattice() {
        let g = TimeGrid::new(1e-12, 1.0, 1e-3, 3.0).unwrap();
        let ts: Vec<f64> = g.iter().collect();
        assert_eq!(ts.len(), g.len());
        assert_eq!(ts[0], 1e-12);
        for w in ts.windows(2) {
            assert!(w[1] > w[0]);
            assert!(w[1] / w[0] <= 1.1 + 1e-12 || (w[1] - w[0] - 1e-3).abs() < 1e-12);
        }
        assert!((ts.last().unwrap() - 1.0).abs() < 1e-12);
        assert!(ts.iter().any(|t| (t - 0.01).abs() < 1e-15));
    }

    #[test]
    fn strong_singularity_shrinks_ratio() {
        let g = TimeGrid::new(1e-12, 2.0, 1e-3, 100.0).unwrap();
        let ts: Vec<f64> = g.iter().collect();
        for w in ts.windows(2) {
            assert!(100.0 * (w[1] - w[0]) / w[0] <= 0.3 + 1e-9);
        }
    }

    #[test]
    fn short_horizon_is_all_warmup() {
        let g = TimeGrid::new(1e-12, 1e-3, 1e-3, 3.0).unwrap();
        let ts: Vec<f64> = g.iter().collect();
        assert_eq!(*ts.last().unwrap(), 1e-3);
        assert_eq!(ts.len(), g.len());
    }
}
