//! Counting support-adjacent, well-separated cells.
//!
//! Every predicate involved is a box condition, so a count over a product
//! window factorizes into per-axis counts. On each axis the predicates are
//! monotone in the index (through `pi` and `gamma`), so each per-axis count
//! is the length of an intersection of index intervals found by bisection.

use serde::{Deserialize, Serialize};

use super::regions::{space_1d, support_1d, time_region, Cell, SpaceKind, TimeKind};
use super::{checked_mul, ScaleParams};
use crate::error::{Error, Result};

/// Inclusive index bounds per axis, plus the time index bounds, at one scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellWindow {
    pub k: usize,
    pub space: Vec<(i64, i64)>,
    pub time: (i64, i64),
}

impl CellWindow {
    pub fn is_empty(&self) -> bool {
        self.time.0 > self.time.1 || self.space.iter().any(|s| s.0 > s.1)
    }

    /// Number of cells; `None` on overflow.
    pub fn size(&self) -> Option<u128> {
        if self.is_empty() {
            return Some(0);
        }
        let t = (self.time.1 - self.time.0) as u128 + 1;
        self.space
            .iter()
            .try_fold(t, |a, s| a.checked_mul((s.1 - s.0) as u128 + 1))
    }

    /// Widened by `r` cells in every direction.
    pub fn grow(&self, r: i64) -> CellWindow {
        CellWindow {
            k: self.k,
            space: self.space.iter().map(|s| (s.0 - r, s.1 + r)).collect(),
            time: (self.time.0 - r, self.time.1 + r),
        }
    }

    pub fn contains(&self, c: &Cell) -> bool {
        c.k == self.k
            && self.time.0 <= c.tau
            && c.tau <= self.time.1
            && self.space.iter().zip(&c.i).all(|(s, &x)| s.0 <= x && x <= s.1)
    }
}

/// A monotone one-axis constraint `lo <= f(x)` or `f(x) <= hi` with `f` non-decreasing.
enum Bound {
    AtLeast(i128),
    AtMost(i128),
}

/// Sub-interval of `[a, b]` on which every `(f, bound)` pair holds.
fn solve(a: i64, b: i64, cons: &[(&dyn Fn(i64) -> Result<i128>, Bound)]) -> Result<Option<(i64, i64)>> {
    let (mut lo, mut hi) = (a, b);
    for (f, bound) in cons {
        if lo > hi {
            return Ok(None);
        }
        match bound {
            Bound::AtLeast(c) => {
                // first x with f(x) >= c
                if f(hi)? < *c {
                    return Ok(None);
                }
                let (mut l, mut h) = (lo, hi);
                while l < h {
                    let mid = l + (h - l) / 2;
                    if f(mid)? >= *c {
                        h = mid;
                    } else {
                        l = mid + 1;
                    }
                }
                lo = l;
            }
            Bound::AtMost(c) => {
                // last x with f(x) <= c
                if f(lo)? > *c {
                    return Ok(None);
                }
                let (mut l, mut h) = (lo, hi);
                while l < h {
                    let mid = l + (h - l + 1) / 2;
                    if f(mid)? <= *c {
                        l = mid;
                    } else {
                        h = mid - 1;
                    }
                }
                hi = l;
            }
        }
    }
    Ok((lo <= hi).then_some((lo, hi)))
}

fn len(r: Option<(i64, i64)>) -> u128 {
    r.map_or(0, |(a, b)| (b - a) as u128 + 1)
}

/// Per-axis counts of the four inclusion-exclusion terms:
/// `[SA, SA & C_ab, SA & C_ba, SA & C_ab & C_ba]`.
type Terms = [u128; 4];

fn axis_terms(p: &ScaleParams, anchor: &Cell, k2: usize, axis: usize, w: (i64, i64)) -> Result<Terms> {
    let x0 = anchor.i[axis];
    let (ea_lo, ea_hi) = support_1d(p, anchor.k, x0, true)?;
    let (sa_lo, sa_hi) = support_1d(p, anchor.k, x0, false)?;
    let (ca_lo, ca_hi) = space_1d(p, anchor.k, x0, SpaceKind::Cube)?;
    let ext_lo = |x: i64| support_1d(p, k2, x, true).map(|s| s.0);
    let ext_hi = |x: i64| support_1d(p, k2, x, true).map(|s| s.1);
    let sup_lo = |x: i64| support_1d(p, k2, x, false).map(|s| s.0);
    let sup_hi = |x: i64| support_1d(p, k2, x, false).map(|s| s.1);
    let cube_lo = |x: i64| space_1d(p, k2, x, SpaceKind::Cube).map(|s| s.0);
    let cube_hi = |x: i64| space_1d(p, k2, x, SpaceKind::Cube).map(|s| s.1);
    terms(
        w,
        (&ext_lo, &ext_hi, ea_lo, ea_hi),
        (&sup_lo, &sup_hi, ca_lo, ca_hi),
        (&cube_lo, &cube_hi, sa_lo, sa_hi),
    )
}

fn time_terms(p: &ScaleParams, anchor: &Cell, k2: usize, w: (i64, i64)) -> Result<Terms> {
    let t0 = anchor.tau;
    let ea = time_region(p, anchor.k, t0, TimeKind::ExtendedSupport)?;
    let sa = time_region(p, anchor.k, t0, TimeKind::Support)?;
    let ca = time_region(p, anchor.k, t0, TimeKind::Interval)?;
    let at = |kind: TimeKind, hi: bool| move |t: i64| time_region(p, k2, t, kind).map(|r| if hi { r.hi } else { r.lo });
    let (ext_lo, ext_hi) = (at(TimeKind::ExtendedSupport, false), at(TimeKind::ExtendedSupport, true));
    let (sup_lo, sup_hi) = (at(TimeKind::Support, false), at(TimeKind::Support, true));
    let (cube_lo, cube_hi) = (at(TimeKind::Interval, false), at(TimeKind::Interval, true));
    terms(
        w,
        (&ext_lo, &ext_hi, ea.lo, ea.hi),
        (&sup_lo, &sup_hi, ca.lo, ca.hi),
        (&cube_lo, &cube_hi, sa.lo, sa.hi),
    )
}

type Side<'a> = (&'a dyn Fn(i64) -> Result<i128>, &'a dyn Fn(i64) -> Result<i128>, i128, i128);

/// `sa`: candidate extended support meets the anchor's;
/// `cab`: candidate support contains the anchor cube;
/// `cba`: candidate cube lies in the anchor support.
fn terms(w: (i64, i64), sa: Side, cab: Side, cba: Side) -> Result<Terms> {
    let sa_cons = [(sa.0, Bound::AtMost(sa.3)), (sa.1, Bound::AtLeast(sa.2))];
    let cab_cons = [(cab.0, Bound::AtMost(cab.2)), (cab.1, Bound::AtLeast(cab.3))];
    let cba_cons = [(cba.0, Bound::AtLeast(cba.2)), (cba.1, Bound::AtMost(cba.3))];
    let base = solve(w.0, w.1, &sa_cons)?;
    let with = |extra: &[&[(&dyn Fn(i64) -> Result<i128>, Bound)]]| -> Result<u128> {
        let mut r = base;
        for cons in extra {
            r = match r {
                Some((a, b)) => solve(a, b, cons)?,
                None => None,
            };
        }
        Ok(len(r))
    };
    Ok([
        len(base),
        with(&[&cab_cons])?,
        with(&[&cba_cons])?,
        with(&[&cab_cons, &cba_cons])?,
    ])
}

fn product(parts: &[Terms], t: usize) -> Result<u128> {
    parts.iter().try_fold(1u128, |a, p| {
        a.checked_mul(p[t]).ok_or(Error::WindowTooLarge {
            size: u128::MAX,
            cap: u128::MAX,
        })
    })
}

/// Number of scale-`k2` cells in `window` that are support adjacent to and
/// well separated from `anchor`.
pub fn count_support_adjacent(p: &ScaleParams, anchor: &Cell, window: &CellWindow) -> Result<u128> {
    let k2 = window.k;
    if anchor.k == 0 || k2 == 0 || anchor.k + 1 > p.kappa || k2 + 1 > p.kappa {
        return Err(Error::Range(format!(
            "support counting needs both scales in 1..kappa-1 (got {} and {k2}, kappa = {})",
            anchor.k, p.kappa
        )));
    }
    if window.space.len() != anchor.i.len() {
        return Err(Error::Geometry("window and anchor dimensions differ".into()));
    }
    if window.is_empty() {
        return Ok(0);
    }
    if window.size().is_none() {
        return Err(Error::WindowTooLarge {
            size: u128::MAX,
            cap: u128::MAX,
        });
    }
    let mut parts = Vec::with_capacity(p.d + 1);
    for (axis, &w) in window.space.iter().enumerate() {
        parts.push(axis_terms(p, anchor, k2, axis, w)?);
    }
    parts.push(time_terms(p, anchor, k2, window.time)?);
    let n = (0..4).map(|t| product(&parts, t)).collect::<Result<Vec<_>>>()?;
    // |SA \ (C_ab u C_ba)| by inclusion-exclusion
    Ok(n[0] + n[3] - n[1] - n[2])
}

/// Smallest scale-`k2` window (plus one cell of slack) holding every cell
/// whose extended support can meet the anchor's.
pub fn support_reach(p: &ScaleParams, anchor: &Cell, k2: usize) -> Result<CellWindow> {
    if k2 == 0 || k2 + 1 > p.kappa {
        return Err(Error::Range(format!("scale {k2} has no support below kappa = {}", p.kappa)));
    }
    let u = p.ell_units(k2)?;
    let u1 = p.ell_units(k2 + 1)?;
    let margin = checked_mul(3 * p.m as i128 + 2, u1)?;
    let space = anchor
        .i
        .iter()
        .map(|&x| {
            let (lo, hi) = support_1d(p, anchor.k, x, true)?;
            Ok((
                to_i64((lo - margin).div_euclid(u))? - 1,
                to_i64((hi + margin).div_euclid(u))? + 1,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let v = p.beta_units(k2)?;
    let v1 = p.beta_units(k2 + 1)?;
    let e = time_region(p, anchor.k, anchor.tau, TimeKind::ExtendedSupport)?;
    let time = (
        to_i64((e.lo - checked_mul(15, v1)?).div_euclid(v))? - 1,
        to_i64((e.hi + checked_mul(14, v1)?).div_euclid(v))? + 1,
    );
    Ok(CellWindow { k: k2, space, time })
}

fn to_i64(x: i128) -> Result<i64> {
    i64::try_from(x).map_err(|_| Error::Range("window index exceeds 64 bits".into()))
}

/// Upper bound on the number of scale-`k2` cells in [`support_reach`] of a scale-`k` anchor.
pub fn phi_region_bound(p: &ScaleParams, k: usize, k2: usize) -> Result<f64> {
    let m = p.m as f64;
    let side = 3.0 * (2.0 * m + 1.0) * p.ell_k(k + 1)? + 2.0 * (3.0 * m + 2.0) * p.ell_k(k2 + 1)?;
    let time = 27.0 * p.beta_k(k + 1)? + 28.0 * p.beta_k(k2 + 1)?;
    Ok((side / p.ell_k(k2)? + 1.0).powi(p.d as i32) * (time / p.beta_k(k2)? + 1.0))
}

/// `chi_j`: number of scale-`j` cells whose extended support contains `R_1(0, 0)`,
/// with the closed-form bound `27 3^d m^{d+2} (2m+1)^d j^2 (j+1)^{3d+4}`.
pub fn chi(p: &ScaleParams, j: usize) -> Result<(u128, f64)> {
    if j == 0 || j + 1 > p.kappa {
        return Err(Error::Range(format!("chi_{j} needs 1 <= j <= kappa - 1")));
    }
    let u1 = p.ell_units(1)?;
    let v1 = p.beta_units(1)?;
    // any index outside this range has a support far from the origin
    let reach = checked_mul(3 * p.m as i128 + 2, p.ell_span(j, 1)?)? + 1;
    let wx = (-to_i64(reach)?, to_i64(reach)?);
    let ext_lo = |x: i64| support_1d(p, j, x, true).map(|s| s.0);
    let ext_hi = |x: i64| support_1d(p, j, x, true).map(|s| s.1);
    let nx = len(solve(
        wx.0,
        wx.1,
        &[(&ext_lo, Bound::AtMost(0)), (&ext_hi, Bound::AtLeast(u1))],
    )?);
    let treach = to_i64(checked_mul(16, p.beta_ratio(j) as i128)?)?;
    let t_lo = |t: i64| time_region(p, j, t, TimeKind::ExtendedSupport).map(|r| r.lo);
    let t_hi = |t: i64| time_region(p, j, t, TimeKind::ExtendedSupport).map(|r| r.hi);
    let nt = len(solve(
        -treach,
        treach,
        &[(&t_lo, Bound::AtMost(0)), (&t_hi, Bound::AtLeast(v1))],
    )?);
    let count = (0..p.d)
        .try_fold(nt, |a, _| a.checked_mul(nx))
        .ok_or(Error::WindowTooLarge {
            size: u128::MAX,
            cap: u128::MAX,
        })?;
    let (m, d, jf) = (p.m as f64, p.d as i32, j as f64);
    let bound = 27.0
        * 3f64.powi(d)
        * m.powi(d + 2)
        * (2.0 * m + 1.0).powi(d)
        * jf * jf
        * (jf + 1.0).powi(3 * d + 4);
    Ok((count, bound))
}

#[cfg(test)]
mod tests {
    use super::super::regions::relation;
    use super::*;

    fn brute(p: &ScaleParams, anchor: &Cell, w: &CellWindow) -> u128 {
        let mut n = 0;
        let mut idx: Vec<i64> = w.space.iter().map(|s| s.0).collect();
        loop {
            for t in w.time.0..=w.time.1 {
                let c = Cell::new(w.k, idx.clone(), t);
                let r = relation(p, anchor, &c).unwrap();
                if r.support_adjacent && r.well_separated {
                    n += 1;
                }
            }
            let mut a = 0;
            loop {
                if a == idx.len() {
                    return n;
                }
                idx[a] += 1;
                if idx[a] <= w.space[a].1 {
                    break;
                }
                idx[a] = w.space[a].0;
                a += 1;
            }
        }
    }

    fn p1() -> ScaleParams {
        ScaleParams::new(1, 7, 1, 0.5, 1.0, 1.0).unwrap().with_kappa(4).unwrap()
    }

    #[test]
    fn empty_window_is_zero() {
        let p = p1();
        let a = Cell::new(1, vec![0], 0);
        let w = CellWindow { k: 1, space: vec![(1, 0)], time: (0, 0) };
        assert_eq!(count_support_adjacent(&p, &a, &w).unwrap(), 0);
    }

    #[test]
    fn factorized_matches_brute_force() {
        let p = p1();
        for (k, k2) in [(1, 1), (2, 1), (1, 2), (2, 2)] {
            let a = Cell::new(k, vec![3], -2);
            let reach = support_reach(&p, &a, k2).unwrap();
            // a sub-window straddling the edge of the reach
            let x = reach.space[0].0;
            let t = reach.time.0;
            let w = CellWindow { k: k2, space: vec![(x, x + 60)], time: (t, t + 40) };
            assert_eq!(count_support_adjacent(&p, &a, &w).unwrap(), brute(&p, &a, &w), "k={k} k2={k2}");
            let mid = (a.i[0] * p.ell_span(k2.min(k), k.max(k2) - k2.min(k)).unwrap() as i64, 0);
            let w = CellWindow { k: k2, space: vec![(mid.0 - 30, mid.0 + 30)], time: (-30, 30) };
            assert_eq!(count_support_adjacent(&p, &a, &w).unwrap(), brute(&p, &a, &w), "k={k} k2={k2}");
        }
    }

    #[test]
    fn window_independent_beyond_reach() {
        let p = ScaleParams::new(2, 28, 1, 0.5, 1.0, 1.0).unwrap().with_kappa(4).unwrap();
        for (k, k2) in [(1, 1), (2, 1), (3, 2), (3, 3)] {
            let a = Cell::new(k, vec![1, -1], 2);
            let w = support_reach(&p, &a, k2).unwrap();
            let n = count_support_adjacent(&p, &a, &w).unwrap();
            assert!(n > 0);
            assert_eq!(n, count_support_adjacent(&p, &a, &w.grow(50)).unwrap());
            assert!((n as f64) <= phi_region_bound(&p, k, k2).unwrap());
        }
    }

    #[test]
    fn translation_invariant() {
        let p = ScaleParams::new(2, 28, 1, 0.5, 1.0, 1.0).unwrap().with_kappa(4).unwrap();
        for (k, k2) in [(1, 1), (2, 1), (2, 2)] {
            let a = Cell::new(k, vec![0, 0], 0);
            let b = Cell::new(k, vec![5, -7], 3);
            let na = count_support_adjacent(&p, &a, &support_reach(&p, &a, k2).unwrap()).unwrap();
            let nb = count_support_adjacent(&p, &b, &support_reach(&p, &b, k2).unwrap()).unwrap();
            assert_eq!(na, nb);
        }
    }

    #[test]
    fn chi_meets_bound() {
        for p in [p1(), ScaleParams::new(2, 28, 1, 0.5, 1.0, 1.0).unwrap().with_kappa(4).unwrap()] {
            for j in 1..=3 {
                let (n, b) = chi(&p, j).unwrap();
                assert!(n as f64 <= b * (1.0 + 1e-12));
                // every one of the 3(2m+1) m (j+1)^3 cubes per axis and 27 m^2 j^2 (j+1)^4 slices counts
                assert!((n as f64 - b).abs() <= 1e-9 * b, "j={j}: {n} vs {b}");
            }
        }
    }

    #[test]
    fn chi_against_enumeration() {
        let p = p1();
        let j = 1;
        let r1 = super::super::regions::cell_region(&p, &Cell::new(1, vec![0], 0)).unwrap();
        let sup = |x: i64, t: i64| super::super::regions::support(&p, &Cell::new(j, vec![x], t), true).unwrap();
        let nx = (-1500..1500).filter(|&x| sup(x, 0).space.contains(&r1.space)).count() as u128;
        let nt = (-25000..25000).filter(|&t| sup(0, t).time.contains(&r1.time)).count() as u128;
        let n = nx * nt;
        assert_eq!(n, chi(&p, j).unwrap().0);
    }
}
