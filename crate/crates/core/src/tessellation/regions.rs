//! Exact cube, interval and support regions.

use serde::{Deserialize, Serialize};

use super::{checked_add, checked_mul, ScaleParams};
use crate::error::{Error, Result};

/// A space-time cell `(k, i, tau)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub k: usize,
    pub i: Vec<i64>,
    pub tau: i64,
}

impl Cell {
    pub fn new(k: usize, i: Vec<i64>, tau: i64) -> Self {
        Cell { k, i, tau }
    }
}

/// Closed box with corners in units of `ell_0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IBox {
    pub lo: Vec<i128>,
    pub hi: Vec<i128>,
}

/// Closed interval in units of `beta_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IInterval {
    pub lo: i128,
    pub hi: i128,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub space: IBox,
    pub time: IInterval,
}

impl IBox {
    pub fn contains(&self, o: &IBox) -> bool {
        self.lo.iter().zip(&o.lo).all(|(a, b)| a <= b) && self.hi.iter().zip(&o.hi).all(|(a, b)| b <= a)
    }

    pub fn intersects(&self, o: &IBox) -> bool {
        (0..self.lo.len()).all(|a| self.lo[a] <= o.hi[a] && o.lo[a] <= self.hi[a])
    }

    pub fn side(&self, axis: usize) -> i128 {
        self.hi[axis] - self.lo[axis]
    }

    /// Real corners.
    pub fn to_real(&self, p: &ScaleParams) -> (Vec<f64>, Vec<f64>) {
        let u = p.ell / p.m as f64;
        (
            self.lo.iter().map(|&x| x as f64 * u).collect(),
            self.hi.iter().map(|&x| x as f64 * u).collect(),
        )
    }
}

impl IInterval {
    pub fn contains(&self, o: &IInterval) -> bool {
        self.lo <= o.lo && o.hi <= self.hi
    }

    pub fn intersects(&self, o: &IInterval) -> bool {
        self.lo <= o.hi && o.lo <= self.hi
    }

    pub fn len(&self) -> i128 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn to_real(&self, p: &ScaleParams) -> (f64, f64) {
        (self.lo as f64 * p.beta, self.hi as f64 * p.beta)
    }
}

impl Region {
    pub fn contains(&self, o: &Region) -> bool {
        self.space.contains(&o.space) && self.time.contains(&o.time)
    }

    pub fn intersects(&self, o: &Region) -> bool {
        self.space.intersects(&o.space) && self.time.intersects(&o.time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Cube,
    Base,
    Influence,
    Extended,
    Super,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeKind {
    Interval,
    Influence,
    Support,
    ExtendedSupport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Relation {
    pub adjacent: bool,
    pub well_separated: bool,
    pub support_adjacent: bool,
}

/// One axis of [`region`] for cube index `x` at scale `k`.
pub(crate) fn space_1d(p: &ScaleParams, k: usize, x: i64, kind: SpaceKind) -> Result<(i128, i128)> {
    let x = x as i128;
    match kind {
        SpaceKind::Cube => {
            let u = p.ell_units(k)?;
            Ok((checked_mul(x, u)?, checked_mul(x + 1, u)?))
        }
        SpaceKind::Base | SpaceKind::Influence => {
            let u = p.ell_units(k)?;
            let b = p.base_radius(k) * if kind == SpaceKind::Base { 1 } else { 2 };
            Ok((checked_mul(x - b, u)?, checked_mul(x + b + 1, u)?))
        }
        SpaceKind::Extended => {
            if k == 0 {
                return Err(Error::Range("extended cubes exist for k >= 1".into()));
            }
            let u = p.ell_units(k - 1)?;
            let r = p.ell_ratio(k) as i128;
            let b = p.base_radius(k - 1);
            Ok((
                checked_mul(checked_add(checked_mul(x, r)?, -b)?, u)?,
                checked_mul(checked_add(checked_mul(x + 1, r)?, b)?, u)?,
            ))
        }
        SpaceKind::Super => {
            if k != 1 {
                return Err(Error::Range("super cubes exist only at scale 1".into()));
            }
            let u = p.ell_units(1)?;
            Ok((checked_mul(x, u)?, checked_mul(x + p.eta as i128, u)?))
        }
    }
}

/// Spatial region of kind `kind` for cube `i` at scale `k` (any `k >= 0`).
pub fn region(p: &ScaleParams, k: usize, i: &[i64], kind: SpaceKind) -> Result<IBox> {
    let mut lo = Vec::with_capacity(i.len());
    let mut hi = Vec::with_capacity(i.len());
    for &x in i {
        let (a, b) = space_1d(p, k, x, kind)?;
        lo.push(a);
        hi.push(b);
    }
    Ok(IBox { lo, hi })
}

/// Time region of kind `kind` for slice `tau` at scale `k >= 1`.
pub fn time_region(p: &ScaleParams, k: usize, tau: i64, kind: TimeKind) -> Result<IInterval> {
    if k == 0 {
        return Err(Error::Range("time regions exist for k >= 1".into()));
    }
    let t = tau as i128;
    let v = p.beta_units(k)?;
    match kind {
        TimeKind::Interval => Ok(IInterval {
            lo: checked_mul(t, v)?,
            hi: checked_mul(t + 1, v)?,
        }),
        TimeKind::Influence => {
            let g = p.gamma(k, 1, tau)? as i128;
            let v1 = p.beta_units(k + 1)?;
            let reach = if k == 1 { p.eta.max(2) as i128 } else { 2 };
            Ok(IInterval {
                lo: checked_mul(g, v1)?,
                hi: checked_mul(t + reach, v)?,
            })
        }
        TimeKind::Support | TimeKind::ExtendedSupport => {
            let g = p.gamma(k, 1, tau)? as i128;
            let v1 = p.beta_units(k + 1)?;
            let (a, b) = if kind == TimeKind::Support { (3, 6) } else { (12, 15) };
            Ok(IInterval {
                lo: checked_mul(g - a, v1)?,
                hi: checked_mul(g + b, v1)?,
            })
        }
    }
}

/// One axis of the spatial support (`extended`: radius `3m+1`).
pub(crate) fn support_1d(p: &ScaleParams, k: usize, x: i64, extended: bool) -> Result<(i128, i128)> {
    let c = p.pi_1d(k, 1, x)? as i128;
    let u = p.ell_units(k + 1)?;
    let m = p.m as i128;
    let rad = if extended { 3 * m + 1 } else { m };
    Ok((checked_mul(c - rad, u)?, checked_mul(c + rad + 1, u)?))
}

/// Support (or extended support) of a cell.
pub fn support(p: &ScaleParams, c: &Cell, extended: bool) -> Result<Region> {
    if c.k == 0 || c.k + 1 > p.kappa {
        return Err(Error::Range(format!(
            "support of a scale-{} cell needs 1 <= k and k+1 <= kappa = {}",
            c.k, p.kappa
        )));
    }
    let mut lo = Vec::with_capacity(c.i.len());
    let mut hi = Vec::with_capacity(c.i.len());
    for &x in &c.i {
        let (a, b) = support_1d(p, c.k, x, extended)?;
        lo.push(a);
        hi.push(b);
    }
    let kind = if extended { TimeKind::ExtendedSupport } else { TimeKind::Support };
    Ok(Region {
        space: IBox { lo, hi },
        time: time_region(p, c.k, c.tau, kind)?,
    })
}

/// `R_k(i, tau)`.
pub fn cell_region(p: &ScaleParams, c: &Cell) -> Result<Region> {
    Ok(Region {
        space: region(p, c.k, &c.i, SpaceKind::Cube)?,
        time: time_region(p, c.k, c.tau, TimeKind::Interval)?,
    })
}

/// `R^inf_k(i, tau)`.
pub fn influence_region(p: &ScaleParams, c: &Cell) -> Result<Region> {
    Ok(Region {
        space: region(p, c.k, &c.i, SpaceKind::Influence)?,
        time: time_region(p, c.k, c.tau, TimeKind::Influence)?,
    })
}

/// Cross-scale adjacency: lift the lower-scale cell and compare at the higher scale.
pub fn adjacent(p: &ScaleParams, a: &Cell, b: &Cell) -> Result<bool> {
    if a.k == b.k {
        if a == b {
            return Ok(false);
        }
        return Ok(linf(&a.i, &b.i) <= 1 && (a.tau - b.tau).abs() <= 1);
    }
    let (hi, lo) = if a.k > b.k { (a, b) } else { (b, a) };
    let j = hi.k - lo.k;
    let i = p.pi(lo.k, j, &lo.i)?;
    let t = p.gamma(lo.k, j, lo.tau)?;
    Ok(linf(&i, &hi.i) <= 1 && (t - hi.tau).abs() <= 1)
}

fn linf(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).max().unwrap_or(0)
}

/// Adjacency, well-separation and support adjacency of two cells.
pub fn relation(p: &ScaleParams, a: &Cell, b: &Cell) -> Result<Relation> {
    let (ra, rb) = (cell_region(p, a)?, cell_region(p, b)?);
    let (sa, sb) = (support(p, a, false)?, support(p, b, false)?);
    let (ea, eb) = (support(p, a, true)?, support(p, b, true)?);
    Ok(Relation {
        adjacent: adjacent(p, a, b)?,
        well_separated: !sb.contains(&ra) && !sa.contains(&rb),
        support_adjacent: ea.intersects(&eb),
    })
}

/// Index ranges (inclusive, per axis, then time) of the scale-`k2` descendants of `c`.
pub fn descendant_window(p: &ScaleParams, c: &Cell, k2: usize) -> Result<(Vec<(i64, i64)>, (i64, i64))> {
    if k2 == 0 || k2 > c.k {
        return Err(Error::Range(format!("descendant scale {k2} must lie in 1..={}", c.k)));
    }
    let span = p.ell_span(k2, c.k - k2)?;
    let space = c
        .i
        .iter()
        .map(|&x| {
            let a = checked_mul(x as i128, span)?;
            let b = checked_mul(x as i128 + 1, span)? - 1;
            Ok((to_i64(a)?, to_i64(b)?))
        })
        .collect::<Result<Vec<_>>>()?;
    // gamma is non-decreasing, so each preimage of an interval is an interval
    let (mut a, mut b) = (c.tau as i128, c.tau as i128);
    for s in (k2..c.k).rev() {
        let rho = p.beta_ratio(s) as i128;
        a = checked_mul(a + 1, rho)?;
        b = checked_mul(b + 2, rho)? - 1;
    }
    Ok((space, (to_i64(a)?, to_i64(b)?)))
}

fn to_i64(x: i128) -> Result<i64> {
    i64::try_from(x).map_err(|_| Error::Range("index exceeds 64 bits".into()))
}
