use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Default ceiling on the expected number of points in one sample.
pub const DEFAULT_POINT_CAP: usize = 20_000_000;

/// Poisson point process of intensity `lambda` on the box `[lo, hi]`,
/// returned as a flat coordinate vector. Deterministic in `(seed, box_id)`.
pub fn sample_ppp(lo: &[f64], hi: &[f64], lambda: f64, seed: u64, box_id: u64, cap: usize) -> Result<Vec<f64>> {
    if lo.len() != hi.len() || lo.is_empty() {
        return Err(Error::Geometry("box corners must have the same positive dimension".into()));
    }
    if lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
        return Err(Error::Geometry("degenerate box".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Range(format!("intensity must be non-negative, got {lambda}")));
    }
    let vol: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
    let mean = lambda * vol;
    if mean > cap as f64 {
        return Err(Error::MemoryCap { expected: mean, cap });
    }
    if mean == 0.0 {
        return Ok(Vec::new());
    }
    let mut rng = stream(seed, &[tag::PPP, box_id]);
    let n = Poisson::new(mean)
        .map_err(|e| Error::Range(e.to_string()))?
        .sample(&mut rng) as usize;
    let d = lo.len();
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        for a in 0..d {
            out.push(rng.random_range(lo[a]..hi[a]));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_intensity_is_empty() {
        assert!(sample_ppp(&[0.0], &[1.0], 0.0, 1, 0, 10).unwrap().is_empty());
    }

    #[test]
    fn deterministic_and_inside() {
        let a = sample_ppp(&[-1.0, 0.0], &[1.0, 3.0], 5.0, 9, 2, 1000).unwrap();
        let b = sample_ppp(&[-1.0, 0.0], &[1.0, 3.0], 5.0, 9, 2, 1000).unwrap();
        assert_eq!(a, b);
        for p in a.chunks(2) {
            assert!((-1.0..1.0).contains(&p[0]) && (0.0..3.0).contains(&p[1]));
        }
    }

    #[test]
    fn cap_and_geometry_errors() {
        assert!(matches!(
            sample_ppp(&[0.0], &[10.0], 100.0, 0, 0, 10),
            Err(Error::MemoryCap { .. })
        ));
        assert!(matches!(sample_ppp(&[0.0], &[0.0], 1.0, 0, 0, 10), Err(Error::Geometry(_))));
    }
}
