//! Thinning coupling between a dense point set moved by confined Brownian
//! motions and a fresh Poisson process.

mod construct;
mod density;

pub use construct::{couple, couple_grid_experiment, uniform_fixture, CoupleOutcome, FailedStep, GridReport, ReplicaRow, Transcript};
pub use density::{f_delta_lower, g_subdensity, killed_density_1d, reflection_factor, ConfinedEndpoint, LemmaParams, SharedMove};

use serde::{Deserialize, Serialize};

use crate::bounds::confinement_bound;
use crate::error::{invalid, Error, Result};
use crate::mobility::suite::confinement_check;

/// How `P(stay in Q_{3M})` enters the domination check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PfMode {
    /// `P = 1`: the lower bound is used as is.
    #[default]
    One,
    /// Closed-form confinement lower bound.
    Bound,
    /// Monte Carlo estimate from discretised paths.
    MonteCarlo { samples: usize, substeps: usize, seed: u64 },
    /// Image-series value.
    Exact,
}

impl PfMode {
    pub fn value(&self, d: usize, delta: f64, z: f64) -> Result<f64> {
        match *self {
            PfMode::One => Ok(1.0),
            PfMode::Bound => confinement_bound(d, delta, z),
            PfMode::MonteCarlo { samples, substeps, seed } => Ok(confinement_check(d, delta, z, samples, substeps, seed)?.0.value),
            PfMode::Exact => Ok(crate::bounds::confinement_exact(d, delta, z)),
        }
    }
}

/// Coupling of `Phi_0` on the outer cube `Q_K` with a Poisson process on the inner cube `Q_{K'}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub d: usize,
    pub delta: f64,
    /// Side of the subcubes tessellating `Q_K`.
    pub ell: f64,
    pub k_outer: f64,
    pub k_inner: f64,
    pub eps: f64,
    /// Density floor: every subcube holds at least `beta ell^d` nodes of `Phi_0`.
    pub beta: f64,
    pub m_window: f64,
    pub m_sep: f64,
    pub xi: f64,
    #[serde(default = "one")]
    pub c1: f64,
    #[serde(default = "one")]
    pub c2: f64,
}

fn one() -> f64 {
    1.0
}

impl CouplingParams {
    /// Grid setting: `M = K - K' + 2 sqrt(d) ell`, `m = 2 sqrt(d) ell`, `xi = eps / 2`.
    pub fn grid(d: usize, delta: f64, ell: f64, k_outer: f64, k_inner: f64, eps: f64, beta: f64) -> Self {
        let m_sep = 2.0 * (d as f64).sqrt() * ell;
        CouplingParams {
            d,
            delta,
            ell,
            k_outer,
            k_inner,
            eps,
            beta,
            m_window: k_outer - k_inner + m_sep,
            m_sep,
            xi: eps / 2.0,
            c1: 1.0,
            c2: 1.0,
        }
    }

    /// One-dimensional fixture inside the subdensity preconditions:
    /// `delta = d^3 m^2 / xi^2 = 64`, `M = 43`, `K = 53`, `K' = 12`, `beta = 150`.
    pub fn desk() -> Self {
        CouplingParams::grid(1, 64.0, 1.0, 53.0, 12.0, 0.5, 150.0)
    }

    pub fn lemma(&self) -> LemmaParams {
        LemmaParams {
            d: self.d,
            delta: self.delta,
            m_window: self.m_window,
            m_sep: self.m_sep,
            xi: self.xi,
        }
    }

    /// Side of the cube the motions are confined to.
    pub fn confinement_side(&self) -> f64 {
        3.0 * self.m_window
    }

    pub fn subcubes_per_axis(&self) -> Result<usize> {
        let n = self.k_outer / self.ell;
        if !(n >= 1.0) || (n - n.round()).abs() > 1e-9 {
            return Err(Error::Geometry(format!(
                "outer side {} is not a whole number of subcubes of side {}",
                self.k_outer, self.ell
            )));
        }
        Ok(n.round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(invalid("d", format!("supported dimensions are 1..=3, got {}", self.d)));
        }
        if !(self.delta > 0.0 && self.ell > 0.0 && self.beta >= 0.0) {
            return Err(Error::Range("need delta > 0, ell > 0 and beta >= 0".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(invalid("eps", format!("need 0 < eps < 1, got {}", self.eps)));
        }
        if !(self.k_outer > self.k_inner && self.k_inner > 0.0) {
            return Err(Error::Geometry(format!(
                "inner cube side {} must lie in (0, {})",
                self.k_inner, self.k_outer
            )));
        }
        if self.m_window < self.k_outer - self.k_inner {
            return Err(Error::Geometry("window M must cover the shift range K - K'".into()));
        }
        self.subcubes_per_axis()?;
        Ok(())
    }

    /// Size conditions of the grid experiment with the knobs `c1`, `c2`.
    pub fn check_grid(&self) -> Result<()> {
        self.validate()?;
        let dmin = self.c1 * self.ell * self.ell / (self.eps * self.eps);
        if self.delta < dmin {
            return Err(Error::Precondition(format!(
                "delta = {} is below c1 ell^2 / eps^2 = {dmin}",
                self.delta
            )));
        }
        let gap = self.c2 * (self.delta * (16.0 * self.d as f64 / self.eps).ln()).sqrt();
        if self.k_inner > self.k_outer - gap {
            return Err(Error::Precondition(format!(
                "inner side {} exceeds K - c2 sqrt(delta log(16d/eps)) = {}",
                self.k_inner,
                self.k_outer - gap
            )));
        }
        Ok(())
    }
}

/// Outcome of the two indistinguishability clauses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndistinguishabilityReport {
    /// Smallest `f_lower(z - x) / P - g(z)` over the grid.
    pub domination_margin: f64,
    /// Smallest `(f_lower(z - x) / P - g(z)) / g(z)` over grid points with `g(z) > 0`.
    pub relative_margin: f64,
    /// Smallest `f_delta(z - x) - g(z)` with the exact confined density.
    pub exact_margin: f64,
    /// Integral of `g` over `Q_{M - m}`.
    pub integral: f64,
    /// `integral - (1 - xi)`.
    pub integral_margin: f64,
    pub pf: f64,
    /// The lower bound was clamped at zero somewhere on the grid.
    pub clamped: bool,
    pub grid_pairs: usize,
    pub passes: bool,
}

fn axis_points(half: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0];
    }
    (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect()
}

fn lattice(d: usize, pts: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p| {
                pts.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Relative slack granted to the domination clause. `g` is an infimum over
/// shifts and the grid contains the extreme shifts, so equality is attained
/// there and the two sides differ only by rounding.
pub const ROUNDOFF: f64 = 1e-12;

/// Checks both clauses for the subdensity of `p` on a deterministic grid.
pub fn verify_indistinguishable(p: &LemmaParams, pf: PfMode) -> Result<IndistinguishabilityReport> {
    verify_with(p, pf, &|z: &[f64]| p.g_unchecked(z))
}

/// Same as [`verify_indistinguishable`] for an arbitrary candidate `g`.
pub fn verify_with(p: &LemmaParams, pf: PfMode, g: &dyn Fn(&[f64]) -> f64) -> Result<IndistinguishabilityReport> {
    if !(1..=3).contains(&p.d) || !(p.delta > 0.0) || !(p.m_window > p.m_sep) {
        return Err(Error::Range("need d in 1..=3, delta > 0 and M > m".into()));
    }
    let z_side = 3.0 * p.m_window;
    let pf_value = pf.value(p.d, p.delta, z_side)?;
    let confined = ConfinedEndpoint::new(p.d, p.delta, z_side)?;
    let (nx, nz) = match p.d {
        1 => (9, 161),
        2 => (5, 41),
        _ => (3, 15),
    };
    let xs = lattice(p.d, &axis_points(0.5 * p.m_sep, nx));
    let zs = lattice(p.d, &axis_points(0.5 * p.m_window, nz));
    let mut dom = f64::INFINITY;
    let mut rel = f64::INFINITY;
    let mut exact = f64::INFINITY;
    let mut clamped = false;
    let mut y = vec![0.0; p.d];
    for z in &zs {
        let gz = g(z);
        for x in &xs {
            for a in 0..p.d {
                y[a] = z[a] - x[a];
            }
            let (lo, c) = f_delta_lower(&y, p.delta, p.m_window);
            clamped |= c;
            dom = dom.min(lo / pf_value - gz);
            if gz > 0.0 {
                rel = rel.min((lo / pf_value - gz) / gz);
            }
            exact = exact.min(confined.density(&y) - gz);
        }
    }
    let h = 0.5 * (p.m_window - p.m_sep);
    let integral = crate::quad::integrate_box(&|z: &[f64]| g(z), &vec![-h; p.d], &vec![h; p.d], 1e-6);
    let integral_margin = integral - (1.0 - p.xi);
    Ok(IndistinguishabilityReport {
        domination_margin: dom,
        relative_margin: rel,
        exact_margin: exact,
        integral,
        integral_margin,
        pf: pf_value,
        clamped,
        grid_pairs: xs.len() * zs.len(),
        passes: (dom >= 0.0 || rel >= -ROUNDOFF) && integral_margin >= 0.0,
    })
}
