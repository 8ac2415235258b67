use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{DisplacementMode, MAX_DIM};
use crate::error::{invalid, Error, Result};
use crate::rng::{stream, tag, Stream};

/// Node positions of one realization.
///
/// Positions are kept unwrapped; on a torus they wrap on access. Per slice and
/// node, the minimum and maximum offset from the slice-start position over the
/// sub-steps is stored, which is all a sup-norm displacement test over
/// slice-aligned intervals needs. Full sub-step paths are kept on request.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    d: usize,
    n: usize,
    beta: f64,
    s: usize,
    start_slice: i64,
    slices: usize,
    seed: u64,
    rate: f64,
    torus: Option<(Vec<f64>, Vec<f64>)>,
    ids: Vec<u64>,
    mobile: Vec<bool>,
    /// Per-node motion stream, advanced slice after slice.
    rngs: Vec<Stream>,
    /// `(slices + 1) * n * d`
    start: Vec<f64>,
    /// `slices * n * d`
    dev_lo: Vec<f64>,
    dev_hi: Vec<f64>,
    /// `(slices * s + 1) * n * d`
    path: Option<Vec<f64>>,
}

impl TrajectorySet {
    /// Nodes at `points` (flat, `d` per node) at the start of slice `start_slice`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d: usize,
        points: Vec<f64>,
        beta: f64,
        s: usize,
        start_slice: i64,
        seed: u64,
        rate: f64,
        torus: Option<(Vec<f64>, Vec<f64>)>,
        store_path: bool,
    ) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(invalid("d", format!("dimension must lie in 1..={MAX_DIM}")));
        }
        if !points.len().is_multiple_of(d) {
            return Err(Error::Geometry("coordinate count is not a multiple of d".into()));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::Geometry("non-finite node position".into()));
        }
        if !(beta > 0.0) || s == 0 {
            return Err(invalid("beta", "slice length and sub-steps must be positive"));
        }
        if let Some((lo, hi)) = &torus {
            if lo.len() != d || hi.len() != d || lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
                return Err(Error::Geometry("bad torus box".into()));
            }
        }
        let n = points.len() / d;
        Ok(TrajectorySet {
            d,
            n,
            beta,
            s,
            start_slice,
            slices: 0,
            seed,
            rate,
            torus,
            ids: (0..n as u64).collect(),
            mobile: vec![true; n],
            rngs: (0..n as u64).map(|v| stream(seed, &[tag::MOVE, v])).collect(),
            path: store_path.then(|| points.clone()),
            start: points,
            dev_lo: Vec::new(),
            dev_hi: Vec::new(),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn substeps(&self) -> usize {
        self.s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn start_slice(&self) -> i64 {
        self.start_slice
    }

    /// One past the last simulated slice: positions exist up to its start.
    pub fn end_slice(&self) -> i64 {
        self.start_slice + self.slices as i64
    }

    pub fn has_path(&self) -> bool {
        self.path.is_some()
    }

    pub fn torus(&self) -> Option<&(Vec<f64>, Vec<f64>)> {
        self.torus.as_ref()
    }

    /// Standard deviation of one sub-step increment per coordinate.
    pub fn sub_sigma(&self) -> f64 {
        (self.rate * self.beta / self.s as f64).sqrt()
    }

    /// Advances every node by `slices` further slices.
    pub fn evolve(&mut self, slices: usize) {
        let (d, s, n) = (self.d, self.s, self.n);
        let sigma = self.sub_sigma();
        let keep = self.path.is_some();
        for _ in 0..slices {
            let q = self.slices;
            let w = n * d;
            self.start.resize((q + 2) * w, 0.0);
            self.dev_lo.resize((q + 1) * w, 0.0);
            self.dev_hi.resize((q + 1) * w, 0.0);
            let (cur, next) = self.start[q * w..].split_at_mut(w);
            let lo_row = &mut self.dev_lo[q * w..];
            let hi_row = &mut self.dev_hi[q * w..];
            let mut sub = if keep { vec![0.0; s * w] } else { Vec::new() };
            let mobile = &self.mobile;
            let step = |v: usize, rng: &mut Stream, end: &mut [f64], lo: &mut [f64], hi: &mut [f64], path: Option<&mut [f64]>| {
                let x0 = &cur[v * d..(v + 1) * d];
                let mut x = [0f64; MAX_DIM];
                x[..d].copy_from_slice(x0);
                lo.fill(0.0);
                hi.fill(0.0);
                let mut path = path;
                for j in 0..s {
                    for a in 0..d {
                        if mobile[v] {
                            let z: f64 = StandardNormal.sample(rng);
                            x[a] += sigma * z;
                        }
                        let off = x[a] - x0[a];
                        lo[a] = lo[a].min(off);
                        hi[a] = hi[a].max(off);
                    }
                    if let Some(p) = path.as_deref_mut() {
                        p[j * d..(j + 1) * d].copy_from_slice(&x[..d]);
                    }
                }
                end.copy_from_slice(&x[..d]);
            };
            let rows = next
                .par_chunks_mut(d)
                .zip(lo_row.par_chunks_mut(d))
                .zip(hi_row.par_chunks_mut(d))
                .zip(self.rngs.par_iter_mut())
                .enumerate();
            if keep {
                rows.zip(sub.par_chunks_mut(s * d))
                    .for_each(|((v, (((e, l), h), r)), p)| step(v, r, e, l, h, Some(p)));
            } else {
                rows.for_each(|(v, (((e, l), h), r))| step(v, r, e, l, h, None));
            }
            if let Some(path) = self.path.as_mut() {
                path.reserve(s * w);
                for j in 0..s {
                    for v in 0..n {
                        path.extend_from_slice(&sub[(v * s + j) * d..(v * s + j + 1) * d]);
                    }
                }
            }
            self.slices += 1;
        }
    }

    /// Copy with extra nodes that never move, present over the whole horizon.
    pub fn with_static_nodes(&self, points: &[f64]) -> Result<TrajectorySet> {
        let d = self.d;
        if !points.len().is_multiple_of(d) {
            return Err(Error::Geometry("coordinate count is not a multiple of d".into()));
        }
        let extra = points.len() / d;
        let (n0, n1) = (self.n, self.n + extra);
        let interleave = |old: &[f64], rows: usize, fill: &dyn Fn(usize) -> f64| {
            let mut out = Vec::with_capacity(rows * n1 * d);
            for r in 0..rows {
                out.extend_from_slice(&old[r * n0 * d..(r + 1) * n0 * d]);
                out.extend((0..extra * d).map(fill));
            }
            out
        };
        let mut t = self.clone();
        t.n = n1;
        let next = self.ids.iter().max().map_or(0, |m| m + 1);
        t.ids.extend(next..next + extra as u64);
        t.mobile.extend(std::iter::repeat_n(false, extra));
        t.rngs.extend((next..next + extra as u64).map(|v| stream(self.seed, &[tag::MOVE, v])));
        t.start = interleave(&self.start, self.slices + 1, &|i| points[i]);
        t.dev_lo = interleave(&self.dev_lo, self.slices, &|_| 0.0);
        t.dev_hi = interleave(&self.dev_hi, self.slices, &|_| 0.0);
        if let Some(p) = &self.path {
            t.path = Some(interleave(p, self.slices * self.s + 1, &|i| points[i]));
        }
        Ok(t)
    }

    fn row(&self, slice: i64) -> Result<usize> {
        if slice < self.start_slice || slice > self.end_slice() {
            return Err(Error::Horizon {
                time: slice as f64 * self.beta,
                start: self.start_slice as f64 * self.beta,
                end: self.end_slice() as f64 * self.beta,
            });
        }
        Ok((slice - self.start_slice) as usize)
    }

    /// Horizon error unless `slice` is a simulated slice boundary.
    pub fn check_slice(&self, slice: i64) -> Result<()> {
        self.row(slice).map(|_| ())
    }

    /// Unwrapped position of `node` at the start of `slice`.
    pub fn pos(&self, node: usize, slice: i64) -> Result<&[f64]> {
        let r = self.row(slice)?;
        let i = (r * self.n + node) * self.d;
        Ok(&self.start[i..i + self.d])
    }

    /// Maps a point into the torus box; identity otherwise.
    pub fn wrap(&self, x: &mut [f64]) {
        if let Some((lo, hi)) = &self.torus {
            for a in 0..self.d {
                x[a] = lo[a] + (x[a] - lo[a]).rem_euclid(hi[a] - lo[a]);
            }
        }
    }

    /// All positions (wrapped) at the start of `slice`, flat.
    pub fn positions_at_slice(&self, slice: i64) -> Result<Vec<f64>> {
        let r = self.row(slice)?;
        let mut v = self.start[r * self.n * self.d..(r + 1) * self.n * self.d].to_vec();
        for x in v.chunks_mut(self.d) {
            self.wrap(x);
        }
        Ok(v)
    }

    /// All positions (wrapped) at sub-step `j` (`0..=s`) of `slice`.
    pub fn positions_at_step(&self, slice: i64, j: usize) -> Result<Vec<f64>> {
        if j == 0 {
            return self.positions_at_slice(slice);
        }
        if j == self.s {
            return self.positions_at_slice(slice + 1);
        }
        let path = self
            .path
            .as_ref()
            .ok_or(Error::Unaligned(slice as f64 * self.beta))?;
        let r = self.row(slice)?;
        if r >= self.slices || j > self.s {
            return Err(Error::Horizon {
                time: (slice as f64 + j as f64 / self.s as f64) * self.beta,
                start: self.start_slice as f64 * self.beta,
                end: self.end_slice() as f64 * self.beta,
            });
        }
        let g = r * self.s + j;
        let w = self.n * self.d;
        let mut v = path[g * w..(g + 1) * w].to_vec();
        for x in v.chunks_mut(self.d) {
            self.wrap(x);
        }
        Ok(v)
    }

    /// Global sub-step index of time `t`.
    fn step_of(&self, t: f64) -> Result<i64> {
        let f = t / self.beta * self.s as f64;
        let g = f.round();
        if (f - g).abs() > 1e-9 * f.abs().max(1.0) {
            return Err(Error::Unaligned(t));
        }
        let g = g as i64;
        let (a, b) = (self.start_slice * self.s as i64, self.end_slice() * self.s as i64);
        if g < a || g > b {
            return Err(Error::Horizon {
                time: t,
                start: self.start_slice as f64 * self.beta,
                end: self.end_slice() as f64 * self.beta,
            });
        }
        Ok(g)
    }

    /// Largest sup-norm deviation of `node` from its slice-`a` position over
    /// slices `a..b` (`a <= b`).
    pub fn max_deviation_slices(&self, node: usize, a: i64, b: i64) -> Result<f64> {
        let (ra, rb) = (self.row(a)?, self.row(b)?);
        let d = self.d;
        let x0 = &self.start[(ra * self.n + node) * d..(ra * self.n + node + 1) * d];
        let mut worst = 0f64;
        for r in ra..rb {
            let i = (r * self.n + node) * d;
            for k in 0..d {
                let off = self.start[i + k] - x0[k];
                worst = worst.max((off + self.dev_lo[i + k]).abs()).max((off + self.dev_hi[i + k]).abs());
            }
        }
        Ok(worst)
    }

    /// Largest sup-norm deviation of `node` from its time-`t0` position over `[t0, t1]`.
    pub fn max_deviation(&self, node: usize, t0: f64, t1: f64) -> Result<f64> {
        if t1 < t0 {
            return Err(Error::Range(format!("empty time interval [{t0}, {t1}]")));
        }
        let (g0, g1) = (self.step_of(t0)?, self.step_of(t1)?);
        let s = self.s as i64;
        if g0 % s == 0 && g1 % s == 0 {
            return self.max_deviation_slices(node, g0 / s, g1 / s);
        }
        let path = self.path.as_ref().ok_or(Error::Unaligned(if g0 % s != 0 { t0 } else { t1 }))?;
        let d = self.d;
        let w = self.n * d;
        let base = self.start_slice * s;
        let at = |g: i64| {
            let i = (g - base) as usize * w + node * d;
            &path[i..i + d]
        };
        let x0 = at(g0).to_vec();
        let mut worst = 0f64;
        for g in g0..=g1 {
            for (k, x) in at(g).iter().enumerate() {
                worst = worst.max((x - x0[k]).abs());
            }
        }
        Ok(worst)
    }

    /// Whether the displacement of `node` throughout `[t0, t1]` stays in the
    /// cube of side `z` centred at its time-`t0` position.
    pub fn displacement_in(&self, node: usize, t0: f64, t1: f64, z: f64, mode: DisplacementMode) -> Result<bool> {
        if z.is_infinite() && z > 0.0 {
            self.step_of(t0)?;
            self.step_of(t1)?;
            return Ok(true);
        }
        let half = match mode {
            DisplacementMode::Checked => 0.5 * z,
            DisplacementMode::Conservative { q } => 0.5 * z - q * self.sub_sigma(),
        };
        if half < 0.0 {
            return Ok(false);
        }
        Ok(self.max_deviation(node, t0, t1)? <= half)
    }

    /// Slice-boundary (or full sub-step) positions as CSV: `node_id,t,x_1..x_d`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let cols: Vec<String> = (1..=self.d).map(|a| format!("x_{a}")).collect();
        writeln!(w, "node_id,t,{}", cols.join(","))?;
        let steps = if self.path.is_some() { self.slices * self.s + 1 } else { self.slices + 1 };
        let per = if self.path.is_some() { 1.0 / self.s as f64 } else { 1.0 };
        for g in 0..steps {
            let t = (self.start_slice as f64 + g as f64 * per) * self.beta;
            let row = match &self.path {
                Some(p) => &p[g * self.n * self.d..(g + 1) * self.n * self.d],
                None => &self.start[g * self.n * self.d..(g + 1) * self.n * self.d],
            };
            for (v, x) in row.chunks(self.d).enumerate() {
                let mut x = x.to_vec();
                self.wrap(&mut x);
                let xs: Vec<String> = x.iter().map(|c| c.to_string()).collect();
                writeln!(w, "{},{},{}", self.ids[v], t, xs.join(","))?;
            }
        }
        Ok(())
    }
}
