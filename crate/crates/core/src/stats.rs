//! Small sample statistics used by the Monte Carlo checks.

use serde::{Deserialize, Serialize};

/// A named point estimate with a confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
}

impl Estimate {
    pub fn new(name: impl Into<String>, value: f64, ci: (f64, f64), n: u64) -> Self {
        Estimate {
            name: name.into(),
            value,
            ci_low: ci.0,
            ci_high: ci.1,
            n,
        }
    }

    /// Exact value, no sampling error.
    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        Estimate::new(name, value, (value, value), 1)
    }

    /// Proportion with a 95% Wilson interval.
    pub fn proportion(name: impl Into<String>, successes: u64, trials: u64) -> Self {
        let ci = crate::bounds::wilson(successes, trials, 0.95).unwrap_or((0.0, 1.0));
        let p = if trials == 0 { f64::NAN } else { successes as f64 / trials as f64 };
        Estimate::new(name, p, ci, trials)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    /// True when the two intervals share a point.
    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Variance-to-mean ratio; 1 for Poisson counts.
pub fn dispersion(xs: &[f64]) -> f64 {
    variance(xs) / mean(xs)
}

/// Mean with a normal-approximation 95% interval.
pub fn mean_estimate(name: impl Into<String>, xs: &[f64]) -> Estimate {
    let m = mean(xs);
    let se = (variance(xs) / xs.len() as f64).sqrt();
    Estimate::new(name, m, (m - 1.96 * se, m + 1.96 * se), xs.len() as u64)
}

/// Pearson correlation; NaN if either side is constant.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert!((correlation(&xs, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-15);
        assert!((correlation(&xs, &[8.0, 6.0, 4.0, 2.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn overlap() {
        let a = Estimate::new("a", 0.5, (0.4, 0.6), 10);
        let b = Estimate::new("b", 0.7, (0.6, 0.8), 10);
        let c = Estimate::new("c", 0.9, (0.85, 0.95), 10);
        assert!(a.overlaps(&b));
        assert!(!a.overlaps(&c));
    }
}
