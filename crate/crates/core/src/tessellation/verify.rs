//! Exhaustive checks of the containment and disjointness properties of the
//! tessellation on a small index window, plus the weight laws.

use serde::Serialize;

use super::counting::{chi, count_support_adjacent, phi_region_bound, support_reach};
use super::regions::{
    cell_region, descendant_window, influence_region, region, support, time_region, Cell, IInterval, Region,
    SpaceKind, TimeKind,
};
use super::weights::{ln_psi, psi_tilde};
use super::ScaleParams;
use crate::error::{Error, Result};

/// Outcome of one family of checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub cases: u64,
    pub failures: u64,
    /// First failing case, if any.
    pub example: Option<String>,
}

impl Check {
    fn new(name: &str) -> Self {
        Check {
            name: name.to_string(),
            cases: 0,
            failures: 0,
            example: None,
        }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            if self.example.is_none() {
                self.example = Some(what());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

/// Index window: scales `1..=kmax`, `|i_a| <= imax`, `|tau| <= tmax`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VerifyWindow {
    pub kmax: usize,
    pub imax: i64,
    pub tmax: i64,
}

impl Default for VerifyWindow {
    fn default() -> Self {
        VerifyWindow { kmax: 3, imax: 3, tmax: 3 }
    }
}

fn cells(d: usize, k: usize, w: &VerifyWindow) -> Vec<Cell> {
    let side = (2 * w.imax + 1) as usize;
    let total = side.pow(d as u32);
    let mut out = Vec::with_capacity(total * (2 * w.tmax + 1) as usize);
    for code in 0..total {
        let mut c = code;
        let i: Vec<i64> = (0..d)
            .map(|_| {
                let x = (c % side) as i64 - w.imax;
                c /= side;
                x
            })
            .collect();
        for tau in -w.tmax..=w.tmax {
            out.push(Cell::new(k, i.clone(), tau));
        }
    }
    out
}

fn hull(iv: &[IInterval]) -> IInterval {
    IInterval {
        lo: iv.iter().map(|x| x.lo).min().unwrap(),
        hi: iv.iter().map(|x| x.hi).max().unwrap(),
    }
}

/// Runs every geometric check. Needs `kappa >= kmax + 1` so supports exist.
pub fn run_suite(p: &ScaleParams, w: &VerifyWindow) -> Result<Vec<Check>> {
    if p.kappa < w.kmax + 1 {
        return Err(Error::Range(format!(
            "the check window up to scale {} needs kappa >= {}",
            w.kmax,
            w.kmax + 1
        )));
    }
    let by_scale: Vec<Vec<Cell>> = (0..=w.kmax).map(|k| cells(p.d, k, w)).collect();
    let mut out = vec![
        relcubes(p, w)?,
        super_cube(p, w)?,
        boundtinf(p, w)?,
    ];
    out.extend(influence_disjoint(p, w, &by_scale)?);
    out.push(descendants(p, w, &by_scale)?);
    out.push(propsupport(p, w, &by_scale)?);
    out.extend(hierarchy(p, w)?);
    out.push(counting(p, w)?);
    Ok(out)
}

/// Base cube of a scale-`k` cube inside the extended cube of its parent.
fn relcubes(p: &ScaleParams, w: &VerifyWindow) -> Result<Check> {
    let mut ch = Check::new("base cube inside parent extended cube");
    for k in 0..w.kmax {
        let span = p.ell_span(k, 1)? as i64;
        let mut xs: Vec<i64> = (-w.imax..=w.imax).collect();
        for q in -1..=1 {
            xs.extend([q * span - 1, q * span, q * span + 1]);
        }
        for &x in &xs {
            let base = region(p, k, &[x], SpaceKind::Base)?;
            let ext = region(p, k + 1, &p.pi(k, 1, &[x])?, SpaceKind::Extended)?;
            ch.record(ext.contains(&base), || format!("k={k} i={x}"));
        }
    }
    Ok(ch)
}

fn super_cube(p: &ScaleParams, w: &VerifyWindow) -> Result<Check> {
    let mut ch = Check::new("super cube inside scale-1 extended cube");
    for x in -w.imax..=w.imax {
        let s = region(p, 1, &[x], SpaceKind::Super)?;
        let e = region(p, 1, &[x], SpaceKind::Extended)?;
        ch.record(e.contains(&s), || format!("i={x}"));
    }
    Ok(ch)
}

fn tau_probes(p: &ScaleParams, k: usize, w: &VerifyWindow) -> Vec<i64> {
    let rho = p.beta_ratio(k) as i64;
    let mut ts: Vec<i64> = (-w.tmax..=w.tmax).collect();
    for q in -2..=2 {
        for d in -2..=2 {
            ts.push(q * rho + d);
        }
    }
    ts
}

/// Time of influence inside three consecutive parent slices and inside the time support.
fn boundtinf(p: &ScaleParams, w: &VerifyWindow) -> Result<Check> {
    let mut ch = Check::new("time of influence inside time support");
    for k in 1..=w.kmax {
        let v = p.beta_units(k + 1)?;
        for tau in tau_probes(p, k, w) {
            let inf = time_region(p, k, tau, TimeKind::Influence)?;
            let g = p.gamma(k, 1, tau)? as i128;
            let three = IInterval { lo: g * v, hi: (g + 3) * v };
            let sup = time_region(p, k, tau, TimeKind::Support)?;
            ch.record(three.contains(&inf) && sup.contains(&inf), || format!("k={k} tau={tau}"));
        }
    }
    Ok(ch)
}

/// If the influence region of the smaller-scale cell leaves the support of
/// the larger one, the two influence regions are disjoint.
fn influence_disjoint(p: &ScaleParams, w: &VerifyWindow, by_scale: &[Vec<Cell>]) -> Result<Vec<Check>> {
    let mut ex = Check::new("influence disjointness (window)");
    let mut pr = Check::new("influence disjointness (boundary probes)");
    let inf: Vec<Vec<Region>> = by_scale
        .iter()
        .enumerate()
        .map(|(k, cs)| {
            if k == 0 {
                return Ok(Vec::new());
            }
            cs.iter().map(|c| influence_region(p, c)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let sup: Vec<Vec<Region>> = by_scale
        .iter()
        .enumerate()
        .map(|(k, cs)| {
            if k == 0 {
                return Ok(Vec::new());
            }
            cs.iter().map(|c| support(p, c, false)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    for k in 1..=w.kmax {
        for k2 in 1..=k {
            for (a, (ia, sa)) in inf[k].iter().zip(&sup[k]).enumerate() {
                for (b, ib) in inf[k2].iter().enumerate() {
                    let ok = sa.contains(ib) || !ib.intersects(ia);
                    ex.record(ok, || format!("{:?} vs {:?}", by_scale[k][a], by_scale[k2][b]));
                }
            }
        }
    }
    // one coordinate at a time, sweep the smaller cell across the support edge
    let near = VerifyWindow { kmax: w.kmax, imax: 1, tmax: 1 };
    for k in 1..=w.kmax {
        for a in cells(p.d, k, &near) {
            let ia = influence_region(p, &a)?;
            let sa = support(p, &a, false)?;
            for k2 in 1..=k {
                let span = p.ell_span(k2, k - k2)? as i64;
                let centre: Vec<i64> = a.i.iter().map(|&x| x * span).collect();
                let (_, (t_first, _)) = descendant_window(p, &a, k2)?;
                let u = p.ell_units(k2)?;
                let reach = 2 * p.base_radius(k2) as i64;
                for axis in 0..=p.d {
                    let (lo, hi, unit, r) = if axis < p.d {
                        (sa.space.lo[axis], sa.space.hi[axis], u, reach)
                    } else {
                        (sa.time.lo, sa.time.hi, p.beta_units(k2)?, 2 * p.beta_ratio(k2) as i64)
                    };
                    for edge in [lo, hi] {
                        let e = edge.div_euclid(unit) as i64;
                        for off in [-r, -r / 2, 0, r / 2, r] {
                            for dlt in -2..=2 {
                                let mut b = Cell::new(k2, centre.clone(), t_first);
                                if axis < p.d {
                                    b.i[axis] = e + off + dlt;
                                } else {
                                    b.tau = e + off + dlt;
                                }
                                let ib = influence_region(p, &b)?;
                                let ok = sa.contains(&ib) || !ib.intersects(&ia);
                                pr.record(ok, || format!("{a:?} vs {b:?}"));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(vec![ex, pr])
}

/// Descendants and their neighbours lie in the support. The union of those
/// regions is a box, so checking the extreme descendants suffices.
fn descendants(p: &ScaleParams, w: &VerifyWindow, by_scale: &[Vec<Cell>]) -> Result<Check> {
    let mut ch = Check::new("descendants and their neighbours inside support");
    for k in 1..=w.kmax {
        for c in &by_scale[k] {
            let sup = support(p, c, false)?;
            for k2 in 1..=k {
                let (sp, (t0, t1)) = descendant_window(p, c, k2)?;
                for pad in [0i64, 1] {
                    let lo: Vec<i64> = sp.iter().map(|s| s.0 - pad).collect();
                    let hi: Vec<i64> = sp.iter().map(|s| s.1 + pad).collect();
                    let a = cell_region(p, &Cell::new(k2, lo, t0 - pad))?;
                    let b = cell_region(p, &Cell::new(k2, hi, t1 + pad))?;
                    let space_ok = sup.space.contains(&a.space) && sup.space.contains(&b.space);
                    let time_ok = sup.time.contains(&hull(&[a.time, b.time]));
                    ch.record(space_ok && time_ok, || format!("{c:?} at scale {k2}, pad {pad}"));
                }
            }
        }
    }
    Ok(ch)
}

/// Intersecting supports: the smaller-scale support lies in the larger-scale extended support.
fn propsupport(p: &ScaleParams, w: &VerifyWindow, by_scale: &[Vec<Cell>]) -> Result<Check> {
    let mut ch = Check::new("intersecting supports nest in extended support");
    let mut sup = vec![Vec::new()];
    let mut ext = vec![Vec::new()];
    for cs in &by_scale[1..] {
        sup.push(cs.iter().map(|c| support(p, c, false)).collect::<Result<Vec<_>>>()?);
        ext.push(cs.iter().map(|c| support(p, c, true)).collect::<Result<Vec<_>>>()?);
    }
    for k in 1..=w.kmax {
        for k2 in 1..=k {
            for (a, sa) in sup[k].iter().enumerate() {
                for (b, sb) in sup[k2].iter().enumerate() {
                    let ok = !sa.intersects(sb) || ext[k][a].contains(sb);
                    ch.record(ok, || format!("{:?} vs {:?}", by_scale[k][a], by_scale[k2][b]));
                }
            }
        }
    }
    Ok(ch)
}

/// Composition laws of `pi` and `gamma` and direct-containment oracles.
fn hierarchy(p: &ScaleParams, w: &VerifyWindow) -> Result<Vec<Check>> {
    let mut pc = Check::new("pi composition");
    let mut gc = Check::new("gamma composition");
    let mut po = Check::new("pi equals direct cube containment");
    let mut go = Check::new("gamma equals direct slice membership");
    let top = p.kappa.min(w.kmax + 1);
    for k in 0..=top {
        for j in 0..=top - k {
            for j2 in 0..=j {
                for x in -100i64..=100 {
                    let direct = p.pi_1d(k, j, x)?;
                    let two = p.pi_1d(k + j2, j - j2, p.pi_1d(k, j2, x)?)?;
                    pc.record(direct == two, || format!("k={k} j={j} j'={j2} i={x}"));
                    if k >= 1 {
                        let direct = p.gamma(k, j, x)?;
                        let two = p.gamma(k + j2, j - j2, p.gamma(k, j2, x)?)?;
                        gc.record(direct == two, || format!("k={k} j={j} j'={j2} tau={x}"));
                    }
                }
            }
        }
    }
    for k in 0..=1usize {
        for j in 0..=2usize {
            if k + j > p.kappa {
                continue;
            }
            let (u, big) = (p.ell_units(k)?, p.ell_units(k + j)?);
            for x in -500i64..=500 {
                let cube = (x as i128 * u, (x as i128 + 1) * u);
                let guess = (cube.0 as f64 / big as f64).floor() as i64;
                let found: Vec<i64> = (guess - 2..=guess + 2)
                    .filter(|&y| y as i128 * big <= cube.0 && cube.1 <= (y as i128 + 1) * big)
                    .collect();
                let ok = found.len() == 1 && found[0] == p.pi_1d(k, j, x)?;
                po.record(ok, || format!("k={k} j={j} i={x}: {found:?}"));
            }
        }
    }
    for k in 1..=w.kmax.min(p.kappa - 1) {
        let (v, big) = (p.beta_units(k)?, p.beta_units(k + 1)?);
        for tau in tau_probes(p, k, &VerifyWindow { tmax: 100, ..*w }) {
            let t = tau as i128 * v;
            // start of slice tau lies in [(g+1) big, (g+2) big)
            let guess = (t as f64 / big as f64).floor() as i64 - 1;
            let found: Vec<i64> = (guess - 2..=guess + 2)
                .filter(|&g| (g as i128 + 1) * big <= t && t < (g as i128 + 2) * big)
                .collect();
            let ok = found.len() == 1 && found[0] == p.gamma(k, 1, tau)?;
            go.record(ok, || format!("k={k} tau={tau}: {found:?}"));
        }
    }
    Ok(vec![pc, gc, po, go])
}

/// `chi_j` against its closed-form bound and support-adjacent counts against the region bound.
fn counting(p: &ScaleParams, w: &VerifyWindow) -> Result<Check> {
    let mut ch = Check::new("support counting bounds");
    let top = w.kmax.min(p.kappa - 1);
    for j in 1..=top {
        let (n, bound) = chi(p, j)?;
        ch.record(n as f64 <= bound * (1.0 + 1e-12), || format!("chi_{j} = {n} > {bound}"));
        for j2 in 1..=j {
            let a = Cell::new(j, vec![0; p.d], 0);
            let n = match count_support_adjacent(p, &a, &support_reach(p, &a, j2)?) {
                Ok(n) => n,
                // the count itself no longer fits in 128 bits
                Err(Error::WindowTooLarge { .. }) => continue,
                Err(e) => return Err(e),
            };
            let b = phi_region_bound(p, j, j2)?;
            ch.record(n as f64 <= b, || format!("phi({j},{j2}) = {n} > {b}"));
        }
    }
    Ok(ch)
}

/// Weight and slice-length laws for `j = 2..=jmax`, evaluated in log space.
pub fn weight_suite(p: &ScaleParams, jmax: usize) -> Result<Vec<Check>> {
    let mut psi_c = Check::new("psi~ <= psi <= 41 psi~");
    let mut sum_c = Check::new("sum of beta_i up to k at most 2 beta_k");
    let mut ratio_c = Check::new("beta ratio m^2 k^2 (k+1)^4");
    let ln41 = 41f64.ln();
    for j in 2..=jmax {
        let lp = ln_psi(p, j, None)?;
        let lt = psi_tilde(p, j)?.ln_value();
        psi_c.record(lt <= lp && lp <= ln41 + lt, || format!("j={j}: ln psi={lp}, ln psi~={lt}"));
    }
    for k in 2..=jmax {
        let top = p.ln_beta(k);
        let s: f64 = (2..=k).map(|i| (p.ln_beta(i) - top).exp()).sum();
        sum_c.record(s <= 2.0, || format!("k={k}: sum/beta_k = {s}"));
    }
    for k in 1..jmax {
        let (m, kk) = (p.m as f64, k as f64);
        let want = 2.0 * m.ln() + 2.0 * kk.ln() + 4.0 * (kk + 1.0).ln();
        let got = p.ln_beta(k + 1) - p.ln_beta(k);
        let mut ok = (got - want).abs() <= 1e-9 * want.abs().max(1.0);
        // while the integers fit, compare against beta_k / beta_1 = (ell_{k-1}/ell_0)^2 k^4
        if let (Ok(a), Ok(b), Ok(l)) = (p.beta_units(k), p.beta_units(k + 1), p.ell_units(k)) {
            let closed = l.checked_mul(l).and_then(|x| x.checked_mul(((k + 1) as i128).pow(4)));
            ok &= closed == Some(b) && b % a == 0 && (b / a) as u128 == p.beta_ratio(k);
        }
        ratio_c.record(ok, || format!("k={k}"));
    }
    Ok(vec![psi_c, sum_c, ratio_c])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_small_window() {
        let p = ScaleParams::new(1, 14, 1, 0.5, 1.0, 1.0).unwrap().with_kappa(3).unwrap();
        let w = VerifyWindow { kmax: 2, imax: 2, tmax: 2 };
        for c in run_suite(&p, &w).unwrap() {
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn suite_needs_kappa() {
        let p = ScaleParams::new(1, 14, 1, 0.5, 1.0, 1.0).unwrap().with_kappa(3).unwrap();
        assert!(run_suite(&p, &VerifyWindow::default()).is_err());
    }

    #[test]
    fn weight_laws_d1() {
        let p = ScaleParams::new(1, 14, 1, 0.5, 1.0, 1.0).unwrap();
        for c in weight_suite(&p, 60).unwrap() {
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn a_broken_support_is_caught() {
        // a too-small m breaks the influence/support separation
        let mut p = ScaleParams::new(1, 7, 1, 0.5, 1.0, 1.0).unwrap().with_kappa(3).unwrap();
        p.eta = 3;
        let w = VerifyWindow { kmax: 2, imax: 2, tmax: 2 };
        let checks = run_suite(&p, &w).unwrap();
        assert!(checks.iter().any(|c| !c.passed()));
    }
}
