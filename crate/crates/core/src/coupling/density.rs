//! Densities of the confined Brownian endpoint and the shared subdensity.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bounds::confinement_exact_1d;
use crate::error::{Error, Result};

const IMAGES: i64 = 12;
const SHARED_CAP: u64 = 10_000_000;

/// `1 - 2d exp(-3 M^2 / 2 delta)`; negative when `M` is small.
pub fn reflection_factor(d: usize, delta: f64, m_window: f64) -> f64 {
    1.0 - 2.0 * d as f64 * (-3.0 * m_window * m_window / (2.0 * delta)).exp()
}

fn gaussian(d: usize, delta: f64, r2: f64) -> f64 {
    (2.0 * PI * delta).powf(-0.5 * d as f64) * (-r2 / (2.0 * delta)).exp()
}

/// Lower bound on `f_delta(y) P(stay in Q_{3M})` from the reflection principle,
/// valid for `y` in `Q_M`.
/// Returns the value clamped at zero and whether the clamp was hit.
pub fn f_delta_lower(y: &[f64], delta: f64, m_window: f64) -> (f64, bool) {
    let r2: f64 = y.iter().map(|v| v * v).sum();
    let v = gaussian(y.len(), delta, r2) * reflection_factor(y.len(), delta, m_window);
    if v < 0.0 {
        (0.0, true)
    } else {
        (v, false)
    }
}

/// Parameters of the shared subdensity `g`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LemmaParams {
    pub d: usize,
    pub delta: f64,
    /// Window `M`: `g` vanishes outside `Q_M`.
    pub m_window: f64,
    /// Perturbation scale: the start points differ by at most `Q_{m_sep}`.
    pub m_sep: f64,
    pub xi: f64,
}

impl LemmaParams {
    /// Smallest window allowed by the precondition.
    pub fn min_window(d: usize, delta: f64, xi: f64) -> f64 {
        (8.0 * delta * (8.0 * d as f64 / xi).ln()).sqrt()
    }

    /// Smallest mixing time allowed by the precondition.
    pub fn min_delta(d: usize, m_sep: f64, xi: f64) -> f64 {
        (d as f64).powi(3) * m_sep * m_sep / (xi * xi)
    }

    pub fn check(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(Error::InvalidParam {
                field: "d",
                reason: format!("supported dimensions are 1..=3, got {}", self.d),
            });
        }
        if !(self.delta > 0.0) || !(self.m_sep >= 0.0) || !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::Range("need delta > 0, m_sep >= 0 and 0 < xi < 1".into()));
        }
        let dmin = Self::min_delta(self.d, self.m_sep, self.xi);
        if self.delta < dmin * (1.0 - 1e-12) {
            return Err(Error::Precondition(format!(
                "delta = {} is below d^3 m^2 / xi^2 = {dmin}",
                self.delta
            )));
        }
        let mmin = Self::min_window(self.d, self.delta, self.xi);
        if self.m_window < mmin * (1.0 - 1e-12) {
            return Err(Error::Precondition(format!(
                "window M = {} is below sqrt(8 delta log(8d/xi)) = {mmin}",
                self.m_window
            )));
        }
        Ok(())
    }

    /// `g(z)` without checking the preconditions.
    pub fn g_unchecked(&self, z: &[f64]) -> f64 {
        if z.iter().any(|v| v.abs() > 0.5 * self.m_window) {
            return 0.0;
        }
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let shifted = norm + self.m_sep * (self.d as f64).sqrt() / 2.0;
        gaussian(self.d, self.delta, shifted * shifted) * reflection_factor(self.d, self.delta, self.m_window)
    }
}

/// The shared subdensity `g`; zero outside `Q_M`.
pub fn g_subdensity(z: &[f64], p: &LemmaParams) -> Result<f64> {
    p.check()?;
    if z.len() != p.d {
        return Err(Error::Geometry(format!("point has {} coordinates, expected {}", z.len(), p.d)));
    }
    Ok(p.g_unchecked(z))
}

/// Killed density over the free density at `w`, for a path started at 0 and
/// killed on leaving `(-a, a)` by time `delta` (image series).
fn killed_ratio(w: f64, delta: f64, a: f64) -> f64 {
    if w.abs() >= a {
        return 0.0;
    }
    let mut s = 0.0;
    for n in -IMAGES..=IMAGES {
        let c = 4.0 * n as f64 * a;
        let c2 = c + 2.0 * a;
        s += ((2.0 * w * c - c * c) / (2.0 * delta)).exp();
        s -= ((2.0 * w * c2 - c2 * c2) / (2.0 * delta)).exp();
    }
    s.clamp(0.0, 1.0)
}

/// One-axis killed density at `w` (mass equals the survival probability).
pub fn killed_density_1d(w: f64, delta: f64, a: f64) -> f64 {
    gaussian(1, delta, w * w) * killed_ratio(w, delta, a)
}

/// Density at `y` of the displacement over `[0, delta]` of a Brownian motion
/// conditioned to stay in the cube of side `z` centred at its start.
#[derive(Debug, Clone, Copy)]
pub struct ConfinedEndpoint {
    pub d: usize,
    pub delta: f64,
    pub z: f64,
    survival_1d: f64,
}

impl ConfinedEndpoint {
    pub fn new(d: usize, delta: f64, z: f64) -> Result<Self> {
        if !(delta > 0.0) || !(z > 0.0) {
            return Err(Error::Range(format!("need delta > 0 and z > 0 (delta={delta}, z={z})")));
        }
        let survival_1d = confinement_exact_1d(delta, z / 2.0);
        if !(survival_1d > 0.0) {
            return Err(Error::Range(format!("survival probability underflows (delta={delta}, z={z})")));
        }
        Ok(ConfinedEndpoint { d, delta, z, survival_1d })
    }

    pub fn survival(&self) -> f64 {
        self.survival_1d.powi(self.d as i32)
    }

    pub fn density(&self, y: &[f64]) -> f64 {
        y.iter()
            .map(|&w| killed_density_1d(w, self.delta, self.z / 2.0) / self.survival_1d)
            .product()
    }

    /// Exact draw by per-axis rejection from the free Gaussian.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        let sd = self.delta.sqrt();
        let cap = (1e3 / self.survival_1d).max(1e4) as u64;
        for slot in out.iter_mut() {
            let mut tries = 0u64;
            *slot = loop {
                tries += 1;
                if tries > cap {
                    return Err(Error::RejectionCap {
                        attempts: cap,
                        rate: self.survival_1d,
                    });
                }
                let n: f64 = StandardNormal.sample(rng);
                let w = sd * n;
                if rng.random::<f64>() < killed_ratio(w, self.delta, self.z / 2.0) {
                    break w;
                }
            };
        }
        Ok(())
    }
}

/// Sampler of `g 1{Q_R}` normalised to a probability density.
#[derive(Debug, Clone, Copy)]
pub struct SharedMove {
    pub lemma: LemmaParams,
    pub r: f64,
}

impl SharedMove {
    pub fn density(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| v.abs() > 0.5 * self.r) {
            0.0
        } else {
            self.lemma.g_unchecked(x)
        }
    }

    /// Total mass `psi` by adaptive quadrature.
    pub fn mass(&self) -> f64 {
        let h = 0.5 * self.r.min(self.lemma.m_window);
        let lo = vec![-h; self.lemma.d];
        let hi = vec![h; self.lemma.d];
        crate::quad::integrate_box(&|x: &[f64]| self.lemma.g_unchecked(x), &lo, &hi, 1e-9)
    }

    /// Draw from the normalised density: Gaussian proposal, accepted with
    /// `exp(-(2 rho |x| + rho^2) / 2 delta)` inside `Q_R`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        let l = &self.lemma;
        let sd = l.delta.sqrt();
        let rho = l.m_sep * (l.d as f64).sqrt() / 2.0;
        let h = 0.5 * self.r.min(l.m_window);
        for _ in 0..SHARED_CAP {
            for slot in out.iter_mut() {
                let n: f64 = StandardNormal.sample(rng);
                *slot = sd * n;
            }
            if out.iter().any(|v| v.abs() > h) {
                continue;
            }
            let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rng.random::<f64>() < (-(2.0 * rho * norm + rho * rho) / (2.0 * l.delta)).exp() {
                return Ok(());
            }
        }
        Err(Error::RejectionCap {
            attempts: SHARED_CAP,
            rate: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::simpson;
    use crate::rng::stream;

    #[test]
    fn killed_density_mass_is_survival() {
        for (delta, a) in [(1.0, 1.0), (1.0, 2.5), (4.0, 3.0)] {
            let mass = simpson(&|w| killed_density_1d(w, delta, a), -a, a, 1e-12);
            assert!((mass - confinement_exact_1d(delta, a)).abs() < 1e-8, "{delta} {a} {mass}");
        }
    }

    #[test]
    fn killed_density_vanishes_at_walls() {
        assert!(killed_density_1d(1.999_999, 1.0, 2.0) < 1e-5);
        assert!(killed_density_1d(-1.999_999, 1.0, 2.0) < 1e-5);
    }

    #[test]
    fn confined_sampler_matches_moments() {
        let c = ConfinedEndpoint::new(1, 1.0, 2.0).unwrap();
        let mut rng = stream(3, &[7]);
        let mut x = [0.0];
        let n = 40_000;
        let mut inside_half = 0;
        for _ in 0..n {
            c.sample(&mut rng, &mut x).unwrap();
            if x[0].abs() < 0.5 {
                inside_half += 1;
            }
        }
        let exact = simpson(&|w| c.density(&[w]), -0.5, 0.5, 1e-12);
        let p = inside_half as f64 / n as f64;
        assert!((p - exact).abs() < 4.0 * (exact * (1.0 - exact) / n as f64).sqrt(), "{p} vs {exact}");
    }

    #[test]
    fn shared_move_mass_matches_sampler_shape() {
        let l = LemmaParams {
            d: 1,
            delta: 4.0,
            m_window: 20.0,
            m_sep: 1.0,
            xi: 0.25,
        };
        let s = SharedMove { lemma: l, r: 6.0 };
        let psi = s.mass();
        let inner = crate::quad::integrate_box(&|x: &[f64]| s.density(x), &[-1.0], &[1.0], 1e-10);
        let mut rng = stream(5, &[1]);
        let mut x = [0.0];
        let n = 40_000;
        let hits = (0..n)
            .filter(|_| {
                s.sample(&mut rng, &mut x).unwrap();
                x[0].abs() < 1.0
            })
            .count();
        let p = hits as f64 / n as f64;
        let want = inner / psi;
        assert!((p - want).abs() < 4.0 * (want * (1.0 - want) / n as f64).sqrt(), "{p} vs {want}");
    }
}
