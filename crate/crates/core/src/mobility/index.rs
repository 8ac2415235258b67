use crate::error::{Error, Result};

use super::MAX_DIM;

/// Uniform bucket grid over a point set, stored in CSR form.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    d: usize,
    lo: Vec<f64>,
    side: f64,
    dims: Vec<usize>,
    /// Period per axis on a torus.
    period: Option<Vec<f64>>,
    starts: Vec<u32>,
    pts: Vec<f64>,
}

const MAX_BUCKETS: usize = 1 << 22;

impl SpatialIndex {
    /// Index of `points` (flat, `d` per point) with bucket side at least `r`.
    /// On a torus the points must already lie in `[lo, hi)`.
    pub fn build(d: usize, points: &[f64], r: f64, torus: Option<(&[f64], &[f64])>) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::Range(format!("spatial index supports 1..={MAX_DIM} dimensions")));
        }
        let n = points.len() / d;
        let (lo, hi) = match torus {
            Some((lo, hi)) => (lo.to_vec(), hi.to_vec()),
            None if n == 0 => (vec![0.0; d], vec![1.0; d]),
            None => {
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for p in points.chunks(d) {
                    for a in 0..d {
                        lo[a] = lo[a].min(p[a]);
                        hi[a] = hi[a].max(p[a]);
                    }
                }
                (lo, hi)
            }
        };
        let extent: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| (b - a).max(1e-12)).collect();
        let vol: f64 = extent.iter().product();
        let fill = (vol / (4.0 * n.max(1) as f64)).powf(1.0 / d as f64);
        let mut side = r.max(fill).max(1e-12);
        let count = |side: f64| -> Vec<usize> {
            extent
                .iter()
                .map(|e| match torus {
                    // whole buckets tile the period
                    Some(_) => ((e / side).floor() as usize).max(1),
                    None => (e / side).floor() as usize + 1,
                })
                .collect()
        };
        let mut dims = count(side);
        while dims.iter().product::<usize>() > MAX_BUCKETS {
            side *= 2.0;
            dims = count(side);
        }
        let period = torus.map(|_| extent.clone());
        let mut idx = SpatialIndex {
            d,
            lo,
            side,
            dims,
            period,
            starts: Vec::new(),
            pts: Vec::new(),
        };
        if let Some(per) = &idx.period {
            // bucket side grows so the buckets tile the period exactly
            idx.side = per[0] / idx.dims[0] as f64;
            for a in 1..d {
                idx.side = idx.side.max(per[a] / idx.dims[a] as f64);
            }
        }
        let nb: usize = idx.dims.iter().product();
        let keys: Vec<usize> = points.chunks(d).map(|p| idx.key(p)).collect();
        let mut starts = vec![0u32; nb + 1];
        for &k in &keys {
            starts[k + 1] += 1;
        }
        for b in 0..nb {
            starts[b + 1] += starts[b];
        }
        let mut fillp = starts.clone();
        let mut pts = vec![0.0; points.len()];
        for (p, &k) in points.chunks(d).zip(&keys) {
            let at = fillp[k] as usize;
            pts[at * d..(at + 1) * d].copy_from_slice(p);
            fillp[k] += 1;
        }
        idx.starts = starts;
        idx.pts = pts;
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.pts.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    fn coord(&self, a: usize, x: f64) -> i64 {
        ((x - self.lo[a]) / self.side).floor() as i64
    }

    fn key(&self, p: &[f64]) -> usize {
        let mut k = 0usize;
        for a in (0..self.d).rev() {
            let c = self.coord(a, p[a]).clamp(0, self.dims[a] as i64 - 1) as usize;
            k = k * self.dims[a] + c;
        }
        k
    }

    /// Per-axis offset from `x` to the interval `[a, b]` (minimal image on a torus).
    fn gap(&self, axis: usize, x: f64, a: f64, b: f64) -> f64 {
        let g = |x: f64| {
            if x < a {
                a - x
            } else if x > b {
                x - b
            } else {
                0.0
            }
        };
        match &self.period {
            None => g(x),
            Some(per) => {
                let p = per[axis];
                let y = a + (x - a).rem_euclid(p);
                g(y).min(g(y - p))
            }
        }
    }

    /// Whether some point lies within Euclidean distance `radius` of the box `[blo, bhi]`.
    pub fn any_near_box(&self, blo: &[f64], bhi: &[f64], radius: f64) -> bool {
        if self.is_empty() {
            return false;
        }
        let d = self.d;
        let mut ranges = Vec::with_capacity(d);
        for a in 0..d {
            let (c0, c1) = (self.coord(a, blo[a] - radius), self.coord(a, bhi[a] + radius));
            let n = self.dims[a] as i64;
            let r = match self.period {
                Some(_) if c1 - c0 + 1 >= n => (0, n - 1),
                Some(_) => (c0, c1),
                None => (c0.max(0), c1.min(n - 1)),
            };
            if r.0 > r.1 {
                return false;
            }
            ranges.push(r);
        }
        let r2 = radius * radius;
        let mut c: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            let mut k = 0usize;
            for a in (0..d).rev() {
                let n = self.dims[a] as i64;
                k = k * self.dims[a] + c[a].rem_euclid(n) as usize;
            }
            let (s, e) = (self.starts[k] as usize, self.starts[k + 1] as usize);
            for p in self.pts[s * d..e * d].chunks(d) {
                let mut dist = 0.0;
                for a in 0..d {
                    let g = self.gap(a, p[a], blo[a], bhi[a]);
                    dist += g * g;
                }
                if dist <= r2 {
                    return true;
                }
            }
            let mut a = 0;
            loop {
                if a == d {
                    return false;
                }
                c[a] += 1;
                if c[a] <= ranges[a].1 {
                    break;
                }
                c[a] = ranges[a].0;
                a += 1;
            }
        }
    }

    /// Whether some point lies within Euclidean distance `r` of `x`.
    pub fn covered(&self, x: &[f64], r: f64) -> bool {
        self.any_near_box(x, x, r)
    }
}
