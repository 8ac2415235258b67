use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, RwLock};

use serde::Serialize;

use super::{ancestor_window, EventMode};
use crate::error::{invalid, Error, Result};
use crate::mobility::{DisplacementMode, TrajectorySet};
use crate::tessellation::{region, Cell, CellWindow, IBox, ScaleParams, SpaceKind};

/// Density indicators of one cell. `dbase` is `None` at the top scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Density {
    pub d: bool,
    pub dext: bool,
    pub dbase: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Kind {
    E,
    D,
    DExt,
    DBase,
    Ak,
}

/// Node counts per scale-`j` cube at slice `t0`, restricted to nodes whose
/// displacement over `[t0, t1]` stays within half-side `half`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct CountKey {
    j: usize,
    t0: i64,
    t1: i64,
    half_bits: u64,
}

type CountMap = HashMap<Vec<i64>, u32>;

/// Lazily evaluated, memoized indicator fields of one realization.
pub struct IndicatorGrid<'a> {
    p: &'a ScaleParams,
    traj: &'a TrajectorySet,
    mode: EventMode,
    disp: DisplacementMode,
    window: CellWindow,
    domain: (Vec<f64>, Vec<f64>),
    counts: RwLock<HashMap<CountKey, Arc<CountMap>>>,
    memo: RwLock<HashMap<(Kind, Cell), bool>>,
}

impl<'a> IndicatorGrid<'a> {
    /// `window` is the scale-1 window clusters live in; `domain` is the box in
    /// which node counts are trusted.
    pub fn new(
        p: &'a ScaleParams,
        traj: &'a TrajectorySet,
        mode: EventMode,
        disp: DisplacementMode,
        window: CellWindow,
        domain: (Vec<f64>, Vec<f64>),
    ) -> Result<Self> {
        if traj.d() != p.d || window.space.len() != p.d || domain.0.len() != p.d {
            return Err(invalid("d", "grid, realization and window dimensions differ"));
        }
        if window.k != 1 {
            return Err(Error::Geometry("cluster window must be at scale 1".into()));
        }
        if (traj.beta() - p.beta).abs() > 1e-12 * p.beta {
            return Err(invalid("beta", "realization slice length differs from the scale-1 slice length"));
        }
        Ok(IndicatorGrid {
            p,
            traj,
            mode,
            disp,
            window,
            domain,
            counts: RwLock::new(HashMap::new()),
            memo: RwLock::new(HashMap::new()),
        })
    }

    pub fn params(&self) -> &ScaleParams {
        self.p
    }

    pub fn window(&self) -> &CellWindow {
        &self.window
    }

    pub fn mode(&self) -> EventMode {
        self.mode
    }

    fn half(&self, z: f64) -> f64 {
        match self.disp {
            DisplacementMode::Checked => 0.5 * z,
            DisplacementMode::Conservative { q } => 0.5 * z - q * self.traj.sub_sigma(),
        }
    }

    fn count_map(&self, j: usize, t0: i64, t1: i64, half: Option<f64>) -> Result<Arc<CountMap>> {
        let key = CountKey {
            j,
            t0,
            t1,
            half_bits: half.map_or(u64::MAX, f64::to_bits),
        };
        if let Some(m) = self.counts.read().unwrap().get(&key) {
            return Ok(m.clone());
        }
        let side = self.p.ell_k(j)?;
        let d = self.p.d;
        let (lo, hi) = &self.domain;
        let mut map = CountMap::new();
        let mut x = vec![0.0; d];
        for v in 0..self.traj.n() {
            x.copy_from_slice(self.traj.pos(v, t0)?);
            self.traj.wrap(&mut x);
            if (0..d).any(|a| x[a] < lo[a] || x[a] > hi[a]) {
                continue;
            }
            if let Some(h) = half {
                if h < 0.0 || self.traj.max_deviation_slices(v, t0, t1)? > h {
                    continue;
                }
            }
            let key: Vec<i64> = x.iter().map(|c| (c / side).floor() as i64).collect();
            *map.entry(key).or_insert(0) += 1;
        }
        // horizon check even when no node needed the end slice
        self.traj.check_slice(t0)?;
        self.traj.check_slice(t1)?;
        let map = Arc::new(map);
        self.counts.write().unwrap().insert(key, map.clone());
        Ok(map)
    }

    fn check_domain(&self, b: &IBox) -> Result<()> {
        let (lo, hi) = b.to_real(self.p);
        let tol = 1e-9 * (1.0 + self.domain.1.iter().fold(0f64, |m, x| m.max(x.abs())));
        for a in 0..self.p.d {
            if lo[a] < self.domain.0[a] - tol || hi[a] > self.domain.1[a] + tol {
                return Err(Error::Geometry(format!(
                    "region [{}, {}] on axis {a} leaves the simulated domain [{}, {}]",
                    lo[a], hi[a], self.domain.0[a], self.domain.1[a]
                )));
            }
        }
        Ok(())
    }

    /// Whether every scale-`j` cube inside `b` holds at least `thr` counted nodes.
    fn all_cubes(&self, b: &IBox, j: usize, thr: f64, map: &CountMap) -> Result<bool> {
        self.check_domain(b)?;
        let u = self.p.ell_units(j)?;
        let ranges: Vec<(i64, i64)> = (0..self.p.d)
            .map(|a| (b.lo[a].div_euclid(u) + i128::from(b.lo[a].rem_euclid(u) != 0), b.hi[a].div_euclid(u) - 1))
            .map(|(x, y)| (x as i64, y as i64))
            .collect();
        if ranges.iter().any(|r| r.0 > r.1) {
            return Ok(true);
        }
        let mut c: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            if (map.get(&c).copied().unwrap_or(0) as f64) < thr {
                return Ok(false);
            }
            let mut a = 0;
            loop {
                if a == c.len() {
                    return Ok(true);
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

    fn memoized(&self, kind: Kind, c: &Cell, f: impl FnOnce() -> Result<bool>) -> Result<bool> {
        let key = (kind, c.clone());
        if let Some(&v) = self.memo.read().unwrap().get(&key) {
            return Ok(v);
        }
        let v = f()?;
        self.memo.write().unwrap().insert(key, v);
        Ok(v)
    }

    fn check_dim(&self, c: &Cell) -> Result<()> {
        if c.i.len() != self.p.d {
            return Err(invalid("cell", "index has the wrong dimension"));
        }
        if c.k == 0 || c.k > self.p.kappa {
            return Err(Error::Range(format!("scale {} outside 1..={}", c.k, self.p.kappa)));
        }
        Ok(())
    }

    fn start_slice(&self, k: usize, tau: i64) -> Result<i64> {
        let t = tau as i128 * self.p.beta_units(k)?;
        i64::try_from(t).map_err(|_| Error::Range("slice index overflow".into()))
    }

    /// Scale-1 event `E` of the configured mode.
    pub fn indicator_e(&self, c: &Cell) -> Result<bool> {
        self.check_dim(c)?;
        if c.k != 1 {
            return Err(Error::Range("E is defined on scale-1 cells".into()));
        }
        self.memoized(Kind::E, c, || {
            let cube = region(self.p, 1, &c.i, SpaceKind::Cube)?;
            match self.mode {
                EventMode::Count => {
                    let thr = (1.0 - self.p.eps) * self.p.lambda * self.p.ell.powi(self.p.d as i32);
                    let map = self.count_map(1, c.tau, c.tau, None)?;
                    self.all_cubes(&cube, 1, thr, &map)
                }
                EventMode::Detect => {
                    let h = self.half(self.p.w * self.p.ell);
                    let map = self.count_map(1, c.tau, c.tau + 1, Some(h))?;
                    self.all_cubes(&cube, 1, 1.0, &map)
                }
            }
        })
    }

    /// `D_k`: all scale-`(k-1)` subcubes are dense at the start of the cell.
    pub fn d(&self, c: &Cell) -> Result<bool> {
        self.check_dim(c)?;
        self.memoized(Kind::D, c, || {
            let thr = (1.0 - self.p.eps_k(c.k)) * self.p.lambda * self.p.ell_k(c.k - 1)?.powi(self.p.d as i32);
            let t = self.start_slice(c.k, c.tau)?;
            let map = self.count_map(c.k - 1, t, t, None)?;
            self.all_cubes(&region(self.p, c.k, &c.i, SpaceKind::Cube)?, c.k - 1, thr, &map)
        })
    }

    /// `D^ext_k`: dense extended cube counting only nodes that stay close for two cell lengths.
    pub fn dext(&self, c: &Cell) -> Result<bool> {
        self.check_dim(c)?;
        self.memoized(Kind::DExt, c, || {
            let p = self.p;
            let thr = (1.0 - p.eps_k(c.k)) * p.lambda * p.ell_k(c.k - 1)?.powi(p.d as i32);
            let t = self.start_slice(c.k, c.tau)?;
            let t1 = self.start_slice(c.k, c.tau + 2)?;
            let z = p.base_radius(c.k - 1) as f64 * p.ell_k(c.k - 1)?;
            let map = self.count_map(c.k - 1, t, t1, Some(self.half(z)))?;
            self.all_cubes(&region(p, c.k, &c.i, SpaceKind::Extended)?, c.k - 1, thr, &map)
        })
    }

    /// `D^base_k` (`k < kappa`): dense base cube from the parent's start to the cell's start.
    pub fn dbase(&self, c: &Cell) -> Result<bool> {
        self.check_dim(c)?;
        if c.k >= self.p.kappa {
            return Err(Error::Range("D^base exists only below the top scale".into()));
        }
        self.memoized(Kind::DBase, c, || {
            let p = self.p;
            let k = c.k;
            let thr = (1.0 - p.eps_k(k + 1)) * p.lambda * p.ell_k(k)?.powi(p.d as i32);
            let t0 = self.start_slice(k + 1, p.gamma(k, 1, c.tau)?)?;
            let t1 = self.start_slice(k, c.tau)?;
            let z = p.base_radius(k) as f64 * p.ell_k(k)?;
            let map = self.count_map(k, t0, t1, Some(self.half(z)))?;
            self.all_cubes(&region(p, k, &c.i, SpaceKind::Base)?, k, thr, &map)
        })
    }

    /// `D_k`, `D^ext_k` and (below the top scale) `D^base_k` of one cell.
    pub fn density_indicators(&self, c: &Cell) -> Result<Density> {
        Ok(Density {
            d: self.d(c)?,
            dext: self.dext(c)?,
            dbase: if c.k < self.p.kappa { Some(self.dbase(c)?) } else { None },
        })
    }

    /// Per-scale factor `A_k` of a cell at scale `k`.
    pub fn a_k(&self, c: &Cell) -> Result<bool> {
        self.check_dim(c)?;
        if self.p.kappa < 2 {
            return Err(invalid("kappa", "ancestry indicators need at least two scales"));
        }
        self.memoized(Kind::Ak, c, || {
            if c.k == self.p.kappa {
                return self.dext(c);
            }
            let top = if c.k == 1 { self.indicator_e(c)? } else { self.dext(c)? };
            Ok(top || !self.dbase(c)?)
        })
    }

    /// Scale-`k` ancestor of a scale-1 cell.
    pub fn ancestor(&self, c: &Cell, k: usize) -> Result<Cell> {
        Ok(Cell::new(k, self.p.pi(1, k - 1, &c.i)?, self.p.gamma(1, k - 1, c.tau)?))
    }

    /// `A` of a scale-1 cell with every factor `A_1..A_kappa` evaluated, the
    /// product formed from the raw `X_k`, `Y_k` indicators.
    pub fn compute_a(&self, c: &Cell) -> Result<(bool, Vec<bool>)> {
        let kappa = self.p.kappa;
        let mut x = Vec::with_capacity(kappa);
        let mut y = Vec::with_capacity(kappa - 1);
        let mut factors = Vec::with_capacity(kappa);
        for k in 1..=kappa {
            let anc = self.ancestor(c, k)?;
            x.push(if k == 1 { self.indicator_e(&anc)? } else { self.dext(&anc)? });
            if k < kappa {
                y.push(self.dbase(&anc)?);
            }
            factors.push(self.a_k(&anc)?);
        }
        Ok((ancestry_product(&x, &y), factors))
    }

    /// `A` of a scale-1 cell, evaluating factors top-down and stopping at the first zero.
    pub fn a(&self, c: &Cell) -> Result<bool> {
        for k in (1..=self.p.kappa).rev() {
            if !self.a_k(&self.ancestor(c, k)?)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `A` over every scale-1 cell of `w`. The pruned sweep goes top-down and
    /// never looks below an ancestor with `A_k = 0`.
    pub fn sweep_a(&self, w: &CellWindow, pruned: bool) -> Result<Vec<(Cell, bool)>> {
        let cells = cells_of(w);
        if !pruned {
            return cells
                .into_iter()
                .map(|c| {
                    let a = self.compute_a(&c)?.0;
                    Ok((c, a))
                })
                .collect();
        }
        let mut alive: Vec<usize> = (0..cells.len()).collect();
        let mut out = vec![true; cells.len()];
        for k in (1..=self.p.kappa).rev() {
            let aw = ancestor_window(self.p, w, k)?;
            let mut level: HashMap<Cell, bool> = HashMap::new();
            let mut next = Vec::with_capacity(alive.len());
            for &ix in &alive {
                let anc = self.ancestor(&cells[ix], k)?;
                debug_assert!(aw.contains(&anc));
                let v = match level.get(&anc) {
                    Some(&v) => v,
                    None => {
                        let v = self.a_k(&anc)?;
                        level.insert(anc, v);
                        v
                    }
                };
                if v {
                    next.push(ix);
                } else {
                    out[ix] = false;
                }
            }
            alive = next;
        }
        Ok(cells.into_iter().zip(out).collect())
    }

    /// Whether the scale-1 cell is bad for the chosen indicator.
    pub fn is_bad(&self, c: &Cell, use_: super::ClusterUse) -> Result<bool> {
        Ok(!match use_ {
            super::ClusterUse::E => self.indicator_e(c)?,
            super::ClusterUse::A => self.a(c)?,
        })
    }

    /// Rows `k, i_1..i_d, tau, E, Dext, Dbase, Ak, A` for the window cells and
    /// their ancestors; indicators that cannot be evaluated are left blank.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.p.d;
        let mut header = vec!["k".to_string()];
        header.extend((1..=d).map(|a| format!("i_{a}")));
        header.extend(["tau", "E", "Dext", "Dbase", "Ak", "A"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        let fmt = |r: Result<bool>| r.map(|b| u8::from(b).to_string()).unwrap_or_default();
        let mut rows: Vec<Cell> = cells_of(&self.window);
        if self.p.kappa >= 2 {
            for k in 2..=self.p.kappa {
                if let Ok(aw) = ancestor_window(self.p, &self.window, k) {
                    rows.extend(cells_of(&aw));
                }
            }
        }
        for c in rows {
            let idx: Vec<String> = c.i.iter().map(|x| x.to_string()).collect();
            let (e, a) = if c.k == 1 {
                (fmt(self.indicator_e(&c)), if self.p.kappa >= 2 { fmt(self.a(&c)) } else { String::new() })
            } else {
                (String::new(), String::new())
            };
            let dbase = if c.k < self.p.kappa { fmt(self.dbase(&c)) } else { String::new() };
            let ak = if self.p.kappa >= 2 { fmt(self.a_k(&c)) } else { String::new() };
            writeln!(w, "{},{},{},{},{},{},{},{}", c.k, idx.join(","), c.tau, e, fmt(self.dext(&c)), dbase, ak, a)?;
        }
        Ok(())
    }
}

/// `prod_{k<kappa} max(X_k, 1 - Y_k) * X_kappa` for `x` of length `kappa`
/// and `y` of length `kappa - 1`.
pub fn ancestry_product(x: &[bool], y: &[bool]) -> bool {
    assert_eq!(x.len(), y.len() + 1, "need one more X than Y");
    x.iter().zip(y).all(|(&a, &b)| a || !b) && x[x.len() - 1]
}

/// All cells of a window in lexicographic `(tau, i)` order.
pub fn cells_of(w: &CellWindow) -> Vec<Cell> {
    let mut out = Vec::new();
    if w.is_empty() {
        return out;
    }
    let d = w.space.len();
    for tau in w.time.0..=w.time.1 {
        let mut c: Vec<i64> = w.space.iter().map(|s| s.0).collect();
        'outer: loop {
            out.push(Cell::new(w.k, c.clone(), tau));
            let mut a = 0;
            loop {
                if a == d {
                    break 'outer;
                }
                c[a] += 1;
                if c[a] <= w.space[a].1 {
                    break;
                }
                c[a] = w.space[a].0;
                a += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_scale_algebra() {
        // (X1 or not Y1)(X2 or not Y2) with the top factor X3 = 1
        for bits in 0..16u8 {
            let b = |i: u8| bits >> i & 1 == 1;
            let (x1, x2, y1, y2) = (b(0), b(1), b(2), b(3));
            let want = (x1 || !y1) && (x2 || !y2);
            assert_eq!(ancestry_product(&[x1, x2, true], &[y1, y2]), want, "{bits:04b}");
        }
        assert!(ancestry_product(&[true, false, true], &[false, false]));
        assert!(!ancestry_product(&[true, true, false], &[true, true]));
    }

    #[test]
    fn product_below_e_when_base_dominates() {
        for bits in 0..32u8 {
            let b = |i: u8| bits >> i & 1 == 1;
            let x = [b(0), b(1), b(2)];
            let y = [b(3), b(4)];
            if y[0] >= x[1] && y[1] >= x[2] {
                assert!(!ancestry_product(&x, &y) || x[0]);
            }
        }
    }

    #[test]
    fn window_cells_in_order() {
        let w = CellWindow { k: 1, space: vec![(0, 1), (-1, 0)], time: (2, 3) };
        let c = cells_of(&w);
        assert_eq!(c.len(), 8);
        assert_eq!(c[0], Cell::new(1, vec![0, -1], 2));
        assert_eq!(c[1], Cell::new(1, vec![1, -1], 2));
        assert_eq!(c[7], Cell::new(1, vec![1, 0], 3));
    }
}
