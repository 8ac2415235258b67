use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A conditioned increment together with the number of proposals it took.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedDraw {
    pub increment: Vec<f64>,
    pub attempts: u64,
}

/// Increment over `[0, delta]` of a `d`-dimensional Brownian motion (unit
/// variance rate) conditioned to stay in the cube of side `z` centred at its
/// start, by rejection on paths sampled at `s` sub-steps.
pub fn conditioned_increment<R: Rng + ?Sized>(
    d: usize,
    delta: f64,
    z: f64,
    s: usize,
    max_attempts: u64,
    rng: &mut R,
) -> Result<ConditionedDraw> {
    if !(z > 0.0) {
        return Err(Error::Range(format!("cube side must be positive, got {z}")));
    }
    if !(delta > 0.0) || s == 0 {
        return Err(Error::Range("delta and s must be positive".into()));
    }
    let sigma = (delta / s as f64).sqrt();
    if z.is_infinite() {
        let increment = (0..d).map(|_| delta.sqrt() * normal(rng)).collect();
        return Ok(ConditionedDraw { increment, attempts: 1 });
    }
    let half = 0.5 * z;
    let mut x = vec![0.0; d];
    for attempt in 1..=max_attempts {
        x.iter_mut().for_each(|v| *v = 0.0);
        let mut inside = true;
        'path: for _ in 0..s {
            for v in x.iter_mut() {
                *v += sigma * normal(rng);
                if v.abs() > half {
                    inside = false;
                    break 'path;
                }
            }
        }
        if inside {
            return Ok(ConditionedDraw { increment: x, attempts: attempt });
        }
    }
    Err(Error::RejectionCap {
        attempts: max_attempts,
        rate: 0.0,
    })
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn infinite_cube_is_gaussian() {
        let mut rng = stream(1, &[2]);
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| conditioned_increment(1, 2.0, f64::INFINITY, 16, 10, &mut rng).unwrap().increment[0])
            .collect();
        let v = crate::stats::variance(&xs);
        assert!((v - 2.0).abs() < 0.1, "{v}");
    }

    #[test]
    fn stays_inside_and_caps() {
        let mut rng = stream(1, &[3]);
        for _ in 0..200 {
            let c = conditioned_increment(2, 1.0, 3.0, 32, 1000, &mut rng).unwrap();
            assert!(c.increment.iter().all(|x| x.abs() <= 1.5));
        }
        let e = conditioned_increment(1, 1.0, 0.05, 64, 50, &mut rng).unwrap_err();
        assert!(matches!(e, Error::RejectionCap { attempts: 50, .. }));
    }
}
