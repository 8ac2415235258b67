//! Analytic tail bounds and the exact references they are checked against.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

/// Which way the inequality points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `truth <= bound`
    UpperBound,
    /// `truth >= bound`
    LowerBound,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub inputs: Vec<(String, f64)>,
    pub kind: BoundKind,
    pub bound: f64,
    pub truth: f64,
    /// `truth - bound`; non-positive for a valid upper bound, non-negative for a valid lower bound.
    pub margin: f64,
}

impl BoundReport {
    pub fn new(name: &str, inputs: &[(&str, f64)], kind: BoundKind, bound: f64, truth: f64) -> Self {
        BoundReport {
            name: name.to_string(),
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            kind,
            bound,
            truth,
            margin: truth - bound,
        }
    }

    pub fn holds(&self) -> bool {
        match self.kind {
            BoundKind::UpperBound => self.truth <= self.bound,
            BoundKind::LowerBound => self.truth >= self.bound,
        }
    }
}

/// Chernoff bound on `P(X >= (1+eps)lam)` (upper) or `P(X <= (1-eps)lam)` (lower)
/// for `X ~ Poisson(lam)`.
pub fn poisson_chernoff(lam: f64, eps: f64, side: Side) -> Result<f64> {
    if !(lam > 0.0 && lam.is_finite()) {
        return Err(Error::Range(format!("lambda must be positive, got {lam}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Range(format!("eps must lie in (0,1), got {eps}")));
    }
    Ok(match side {
        Side::Upper => (-lam * eps * eps * (1.0 - eps / 3.0) / 2.0).exp(),
        Side::Lower => (-lam * eps * eps / 2.0).exp(),
    })
}

pub fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

pub fn poisson_ln_pmf(lam: f64, k: u64) -> f64 {
    if lam == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -lam + k as f64 * lam.ln() - ln_factorial(k)
}

/// `ln P(X >= k)`, summing the decreasing terms upward from `k` (requires `k > lam`).
fn ln_sf_above_mean(lam: f64, k: u64) -> f64 {
    let base = poisson_ln_pmf(lam, k);
    let (mut sum, mut term, mut j) = (1.0f64, 1.0f64, k);
    loop {
        j += 1;
        term *= lam / j as f64;
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    base + sum.ln()
}

/// `ln P(X <= k)`, summing the decreasing terms downward from `k` (requires `k < lam`).
fn ln_cdf_below_mean(lam: f64, k: u64) -> f64 {
    let base = poisson_ln_pmf(lam, k);
    let (mut sum, mut term) = (1.0f64, 1.0f64);
    let mut j = k;
    while j > 0 {
        term *= j as f64 / lam;
        sum += term;
        j -= 1;
        if term < sum * 1e-18 {
            break;
        }
    }
    base + sum.ln()
}

/// Exact `ln P(X <= k)` for `X ~ Poisson(lam)`.
pub fn poisson_ln_cdf(lam: f64, k: u64) -> f64 {
    if lam == 0.0 {
        return 0.0;
    }
    if (k as f64) < lam {
        ln_cdf_below_mean(lam, k)
    } else {
        (-ln_sf_above_mean(lam, k + 1).exp()).ln_1p()
    }
}

/// Exact `ln P(X >= k)` for `X ~ Poisson(lam)`.
pub fn poisson_ln_sf(lam: f64, k: u64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if lam == 0.0 {
        return f64::NEG_INFINITY;
    }
    if (k as f64) > lam {
        ln_sf_above_mean(lam, k)
    } else {
        (-ln_cdf_below_mean(lam, k - 1).exp()).ln_1p()
    }
}

pub fn poisson_cdf(lam: f64, k: u64) -> f64 {
    poisson_ln_cdf(lam, k).exp()
}

/// Integer threshold of a real level, snapping values within rounding noise of an integer.
fn snap(x: f64) -> Option<f64> {
    let r = x.round();
    ((x - r).abs() <= 1e-9 * r.abs().max(1.0)).then_some(r)
}

/// Exact tail that the Chernoff bound of `side` controls.
pub fn poisson_tail_exact(lam: f64, eps: f64, side: Side) -> f64 {
    match side {
        Side::Upper => {
            let x = (1.0 + eps) * lam;
            let k = snap(x).unwrap_or_else(|| x.ceil());
            poisson_ln_sf(lam, k as u64).exp()
        }
        Side::Lower => {
            let x = (1.0 - eps) * lam;
            let k = snap(x).unwrap_or_else(|| x.floor());
            poisson_ln_cdf(lam, k as u64).exp()
        }
    }
}

/// Bound on `P(X > R)` for a centred Gaussian with standard deviation `sigma`, valid for `R >= sigma`.
pub fn gaussian_tail(sigma: f64, r: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Range(format!("sigma must be positive, got {sigma}")));
    }
    if r < sigma {
        return Err(Error::Precondition(format!(
            "gaussian tail bound needs R >= sigma (R={r}, sigma={sigma})"
        )));
    }
    Ok(sigma / ((2.0 * PI).sqrt() * r) * (-r * r / (2.0 * sigma * sigma)).exp())
}

/// `P(X > R)` by quadrature of the density.
pub fn gaussian_tail_quadrature(sigma: f64, r: f64) -> f64 {
    let phi = |x: f64| (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt());
    quad::simpson(&phi, r, r + 40.0 * sigma, 1e-15)
}

/// Lower bound on the probability that a `d`-dimensional Brownian motion stays
/// in the cube of side `z` centred at its start over a time span `delta`.
pub fn confinement_bound(d: usize, delta: f64, z: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Range(format!("delta must be positive, got {delta}")));
    }
    if z < 3.0 * delta.sqrt() {
        return Err(Error::Precondition(format!(
            "confinement bound needs z >= 3*sqrt(delta) (z={z}, delta={delta})"
        )));
    }
    Ok(1.0 - d as f64 * (-z * z / (18.0 * delta)).exp())
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Exact one-axis probability that Brownian motion started at 0 stays in
/// `(-a, a)` up to time `delta` (method of images).
pub fn confinement_exact_1d(delta: f64, a: f64) -> f64 {
    if a.is_infinite() {
        return 1.0;
    }
    let s = delta.sqrt();
    let mut p = 0.0;
    for n in -40i64..=40 {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let c = 2.0 * n as f64 * a;
        p += sign * (std_normal_cdf((a - c) / s) - std_normal_cdf((-a - c) / s));
    }
    p.clamp(0.0, 1.0)
}

/// Exact probability of staying in the cube of side `z` centred at the start.
pub fn confinement_exact(d: usize, delta: f64, z: f64) -> f64 {
    confinement_exact_1d(delta, z / 2.0).powi(d as i32)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(successes: u64, trials: u64, level: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(Error::Range(format!(
            "wilson needs 0 <= successes <= trials and trials >= 1 (got {successes}/{trials})"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Range(format!("confidence level must lie in (0,1), got {level}")));
    }
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    Ok((lo, hi))
}

/// Appendix-style inequality grid: Chernoff against the exact Poisson tail,
/// the Gaussian tail bound against quadrature, and the confinement bound
/// against the image-series probability.
pub fn verify_grid() -> Vec<BoundReport> {
    let mut out = Vec::new();
    for &lam in &[10.0, 100.0, 1000.0] {
        for &eps in &[0.1, 0.3, 0.5, 0.9] {
            for (side, name) in [(Side::Upper, "chernoff_upper"), (Side::Lower, "chernoff_lower")] {
                let b = poisson_chernoff(lam, eps, side).expect("grid values are in range");
                let t = poisson_tail_exact(lam, eps, side);
                out.push(BoundReport::new(name, &[("lambda", lam), ("eps", eps)], BoundKind::UpperBound, b, t));
            }
        }
    }
    for &sigma in &[1.0, 2.5] {
        for &ratio in &[1.0, 1.5, 2.0, 3.0] {
            let r = ratio * sigma;
            let b = gaussian_tail(sigma, r).expect("R >= sigma");
            let t = gaussian_tail_quadrature(sigma, r);
            out.push(BoundReport::new("gaussian_tail", &[("sigma", sigma), ("R", r)], BoundKind::UpperBound, b, t));
        }
    }
    for d in [1usize, 2, 3] {
        for &delta in &[0.5, 1.0, 2.0] {
            for &k in &[3.0, 4.0, 5.0] {
                let z = k * f64::sqrt(delta);
                let b = confinement_bound(d, delta, z).expect("z >= 3 sqrt(delta)");
                let t = confinement_exact(d, delta, z);
                out.push(BoundReport::new(
                    "confinement",
                    &[("d", d as f64), ("delta", delta), ("z", z)],
                    BoundKind::LowerBound,
                    b,
                    t,
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chernoff_substitution() {
        let b = poisson_chernoff(100.0, 0.5, Side::Lower).unwrap();
        assert!((b - (-12.5f64).exp()).abs() < 1e-20);
        assert!((b - 3.726653e-6).abs() < 1e-12);
    }

    #[test]
    fn chernoff_small_eps_tends_to_one() {
        for side in [Side::Upper, Side::Lower] {
            assert!(poisson_chernoff(10.0, 1e-9, side).unwrap() > 1.0 - 1e-15);
        }
    }

    #[test]
    fn chernoff_range_errors() {
        assert!(poisson_chernoff(0.0, 0.5, Side::Upper).is_err());
        assert!(poisson_chernoff(1.0, 1.0, Side::Upper).is_err());
        assert!(poisson_chernoff(1.0, 0.0, Side::Lower).is_err());
    }

    #[test]
    fn poisson_cdf_small_values() {
        // P(Poisson(2) <= 1) = 3 e^{-2}
        assert!((poisson_cdf(2.0, 1) - 3.0 * (-2.0f64).exp()).abs() < 1e-15);
        // P(Poisson(2) >= 3) = 1 - 5 e^{-2}
        let sf = poisson_ln_sf(2.0, 3).exp();
        assert!((sf - (1.0 - 5.0 * (-2.0f64).exp())).abs() < 1e-15);
        // P(Poisson(1) <= 4) = e^{-1}(1 + 1 + 1/2 + 1/6 + 1/24)
        let v = (-1.0f64).exp() * (1.0 + 1.0 + 0.5 + 1.0 / 6.0 + 1.0 / 24.0);
        assert!((poisson_cdf(1.0, 4) - v).abs() < 1e-15);
    }

    #[test]
    fn poisson_cdf_sums_to_one_with_sf() {
        for &lam in &[0.5, 7.0, 100.0, 1000.0, 10000.0] {
            for &k in &[0u64, 3, 90, 100, 110, 950, 1050, 9900, 10100] {
                let c = poisson_ln_cdf(lam, k).exp();
                let s = poisson_ln_sf(lam, k + 1).exp();
                assert!((c + s - 1.0).abs() < 1e-12, "lam={lam} k={k}: {c} + {s}");
            }
        }
    }

    #[test]
    fn poisson_100_lower_tail_below_bound() {
        let exact = poisson_cdf(100.0, 50);
        // independent check: direct term summation from zero in log space
        let direct: f64 = (0..=50u64).map(|j| poisson_ln_pmf(100.0, j).exp()).sum();
        assert!((exact - direct).abs() < 1e-20);
        assert!(exact <= poisson_chernoff(100.0, 0.5, Side::Lower).unwrap());
    }

    #[test]
    fn gaussian_tail_values() {
        let b = gaussian_tail(1.0, 2.0).unwrap();
        assert!((b - 0.0269954832).abs() < 1e-9);
        let t = gaussian_tail_quadrature(1.0, 2.0);
        assert!((t - 0.0227501319).abs() < 1e-9);
        assert!((t - 0.5 * erfc(2.0 / std::f64::consts::SQRT_2)).abs() < 1e-11);
        let b1 = gaussian_tail(1.0, 1.0).unwrap();
        assert!((b1 - 0.2419707245).abs() < 1e-9);
        assert!((gaussian_tail_quadrature(1.0, 1.0) - 0.1586552539).abs() < 1e-9);
        assert!(matches!(gaussian_tail(1.0, 0.5), Err(Error::Precondition(_))));
    }

    #[test]
    fn confinement_values() {
        let b = confinement_bound(1, 1.0, 3.0).unwrap();
        assert!((b - (1.0 - (-0.5f64).exp())).abs() < 1e-15);
        assert!((b - 0.3934693).abs() < 1e-6);
        assert!(confinement_bound(1, 1.0, 2.9).is_err());
        assert!(confinement_bound(2, 1.0, 1e3).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn confinement_exact_matches_quadrature_of_image_density() {
        // integrate the image-series killed density directly
        let (delta, a) = (1.0f64, 1.5f64);
        let s = delta.sqrt();
        let dens = |y: f64| {
            (-40i64..=40)
                .map(|n| {
                    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                    let u = (y - 2.0 * n as f64 * a) / s;
                    sign * (-0.5 * u * u).exp() / (s * (2.0 * PI).sqrt())
                })
                .sum::<f64>()
        };
        let q = quad::simpson(&dens, -a, a, 1e-13);
        assert!((q - confinement_exact_1d(delta, a)).abs() < 1e-10);
    }

    #[test]
    fn wilson_reference() {
        let (lo, hi) = wilson(50, 100, 0.95).unwrap();
        assert!((lo - 0.4038).abs() < 1e-3, "{lo}");
        assert!((hi - 0.5962).abs() < 1e-3, "{hi}");
        assert_eq!(wilson(0, 17, 0.95).unwrap().0, 0.0);
        assert_eq!(wilson(17, 17, 0.95).unwrap().1, 1.0);
        assert!(wilson(3, 2, 0.95).is_err());
        assert!(wilson(0, 0, 0.95).is_err());
    }

    #[test]
    fn verify_grid_all_hold() {
        for r in verify_grid() {
            assert!(r.holds(), "{r:?}");
        }
    }
}
