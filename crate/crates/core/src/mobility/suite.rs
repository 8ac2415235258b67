//! Monte Carlo checks of the node system.

use rayon::prelude::*;
use serde::Serialize;

use super::{sample_ppp, Boundary, DisplacementMode, SimConfig, SpatialIndex, TrajectorySet, DEFAULT_POINT_CAP};
use crate::bounds::confinement_bound;
use crate::error::Result;
use crate::rng::replica_seed;
use crate::stats::{correlation, dispersion, mean, mean_estimate, Estimate};

/// Counts of nodes in an interior box across replicas.
#[derive(Debug, Clone, Serialize)]
pub struct CountReport {
    pub expected: f64,
    pub mean: Estimate,
    pub dispersion: f64,
    /// Largest allowed gap `|mean - expected|` (three standard errors of a Poisson mean).
    pub tolerance: f64,
}

impl CountReport {
    fn from_counts(counts: &[f64], expected: f64, name: &str) -> Self {
        CountReport {
            expected,
            mean: mean_estimate(name, counts),
            dispersion: dispersion(counts),
            tolerance: 3.0 * (expected / counts.len() as f64).sqrt(),
        }
    }

    pub fn mean_ok(&self) -> bool {
        (self.mean.value - self.expected).abs() <= self.tolerance
    }

    pub fn dispersion_ok(&self) -> bool {
        (0.8..=1.2).contains(&self.dispersion)
    }
}

fn count_in(points: &[f64], d: usize, lo: &[f64], hi: &[f64]) -> usize {
    points
        .chunks(d)
        .filter(|p| (0..d).all(|a| lo[a] <= p[a] && p[a] < hi[a]))
        .count()
}

/// Counts in `[-half, half]^d` at time 0 and at time `delta` (padded box).
pub fn measure_preservation(
    d: usize,
    lambda: f64,
    delta: f64,
    half: f64,
    replicas: u64,
    seed: u64,
) -> Result<(CountReport, CountReport)> {
    let runs: Vec<(f64, f64)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let cfg = SimConfig::new(d, lambda, 0.0, half, delta, 1, 1, replica_seed(seed, r));
            let t = cfg.realize()?;
            let (lo, hi) = (vec![-half; d], vec![half; d]);
            let c0 = count_in(&t.positions_at_slice(0)?, d, &lo, &hi) as f64;
            let c1 = count_in(&t.positions_at_slice(1)?, d, &lo, &hi) as f64;
            Ok((c0, c1))
        })
        .collect::<Result<_>>()?;
    let expected = lambda * (2.0 * half).powi(d as i32);
    let c0: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let c1: Vec<f64> = runs.iter().map(|r| r.1).collect();
    Ok((
        CountReport::from_counts(&c0, expected, "count_t0"),
        CountReport::from_counts(&c1, expected, "count_t_delta"),
    ))
}

/// Sample correlation of PPP counts in two disjoint boxes, with the count report of the first.
pub fn ppp_independence(d: usize, lambda: f64, half: f64, replicas: u64, seed: u64) -> Result<(CountReport, f64)> {
    let runs: Vec<(f64, f64)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let (lo, hi) = (vec![-half; d], vec![half; d]);
            let pts = sample_ppp(&lo, &hi, lambda, replica_seed(seed, r), 0, DEFAULT_POINT_CAP)?;
            let mut mid = hi.clone();
            mid[0] = 0.0;
            let mut mid_lo = lo.clone();
            mid_lo[0] = 0.0;
            Ok((count_in(&pts, d, &lo, &mid) as f64, count_in(&pts, d, &mid_lo, &hi) as f64))
        })
        .collect::<Result<_>>()?;
    let a: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let b: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let whole: Vec<f64> = runs.iter().map(|r| r.0 + r.1).collect();
    let expected = lambda * (2.0 * half).powi(d as i32);
    Ok((CountReport::from_counts(&whole, expected, "ppp_count"), correlation(&a, &b)))
}

/// Empirical probability that a path stays in the cube of side `z` over `[0, delta]`,
/// next to the confinement lower bound.
pub fn confinement_check(d: usize, delta: f64, z: f64, n: usize, s: usize, seed: u64) -> Result<(Estimate, f64)> {
    let mut t = TrajectorySet::new(d, vec![0.0; n * d], delta, s, 0, seed, 1.0, None, false)?;
    t.evolve(1);
    let mut inside = 0u64;
    for v in 0..n {
        if t.displacement_in(v, 0.0, delta, z, DisplacementMode::Checked)? {
            inside += 1;
        }
    }
    let bound = confinement_bound(d, delta, z)?;
    Ok((Estimate::proportion("confinement", inside, n as u64), bound))
}

/// One-slice displacement variance per coordinate, pooled over nodes and axes.
pub fn slice_variance(d: usize, beta: f64, n: usize, s: usize, seed: u64) -> Result<f64> {
    let mut t = TrajectorySet::new(d, vec![0.0; n * d], beta, s, 0, seed, 1.0, None, false)?;
    t.evolve(1);
    let xs = t.positions_at_slice(1)?;
    Ok(xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64)
}

/// Fraction of replicas in which the origin is within `r` of a node at time 0.
pub fn origin_coverage(d: usize, lambda: f64, r: f64, replicas: u64, seed: u64) -> Result<Estimate> {
    let hits: Vec<bool> = (0..replicas)
        .into_par_iter()
        .map(|k| {
            let (lo, hi) = (vec![-r - 1.0; d], vec![r + 1.0; d]);
            let pts = sample_ppp(&lo, &hi, lambda, replica_seed(seed, k), 0, DEFAULT_POINT_CAP)?;
            let idx = SpatialIndex::build(d, &pts, r, None)?;
            Ok(idx.covered(&vec![0.0; d], r))
        })
        .collect::<Result<_>>()?;
    let n = hits.iter().filter(|&&h| h).count() as u64;
    Ok(Estimate::proportion("origin_covered", n, replicas))
}

/// Mean count for a torus run, as a sanity value for periodic boxes.
pub fn torus_mean_count(d: usize, lambda: f64, half: f64, slices: usize, replicas: u64, seed: u64) -> Result<f64> {
    let counts: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut cfg = SimConfig::new(d, lambda, 0.0, half, 1.0, slices, 1, replica_seed(seed, r));
            cfg.boundary = Boundary::Torus;
            let t = cfg.realize()?;
            Ok(count_in(&t.positions_at_slice(slices as i64)?, d, &vec![-half; d], &vec![half; d]) as f64)
        })
        .collect::<Result<_>>()?;
    Ok(mean(&counts))
}
