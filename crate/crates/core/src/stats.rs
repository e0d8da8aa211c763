//! Sample statistics for Monte-Carlo ensembles and multi-seed aggregates.

/// Normal-approximation quantile used for the 95% confidence intervals.
pub const Z95: f64 = 1.96;

/// Moments of a finished sample, computed in two passes in slice order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Standard error of `variance`, from the fourth central moment.
    pub variance_se: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                variance: f64::NAN,
                variance_se: f64::NAN,
            };
        }
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let (m2, m4) = xs.iter().fold((0.0, 0.0), |(m2, m4), x| {
            let d = x - mean;
            let d2 = d * d;
            (m2 + d2, m4 + d2 * d2)
        });
        if n < 2 {
            return Self {
                n,
                mean,
                variance: f64::NAN,
                variance_se: f64::NAN,
            };
        }
        let variance = m2 / (nf - 1.0);
        let mu4 = m4 / nf;
        let s4 = variance * variance;
        let var_of_var = if n > 3 {
            (mu4 - s4 * (nf - 3.0) / (nf - 1.0)) / nf
        } else {
            f64::NAN
        };
        Self {
            n,
            mean,
            variance,
            variance_se: var_of_var.max(0.0).sqrt(),
        }
    }

    /// Standard error of the mean.
    pub fn mean_se(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }

    /// Half-width of the 95% confidence interval for the mean.
    pub fn ci95(&self) -> f64 {
        Z95 * self.mean_se()
    }
}

/// Streaming mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Unbiased sample variance; zero for a single observation.
    pub fn variance(&self) -> f64 {
        match self.n {
            0 => f64::NAN,
            1 => 0.0,
            n => self.m2 / (n - 1) as f64,
        }
    }

    /// `1.96·s/√n`, zero for a single observation.
    pub fn ci95(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        Z95 * (self.variance() / self.n as f64).sqrt()
    }
}
