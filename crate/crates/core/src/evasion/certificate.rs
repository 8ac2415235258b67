use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::SliceField;
use crate::error::Result;
use crate::mobility::{SpatialIndex, TrajectorySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    DetectionCertain,
    EvasionPossible,
    Inconclusive,
}

/// Moves allowed to the evading target within one slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvasionMode {
    /// At most one neighbouring cell per slice.
    Hop,
    /// Any path through cells vacant during the slice.
    #[default]
    Closure,
}

/// Piecewise-linear target trajectory, as `(time, position)` knots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub d: usize,
    pub knots: Vec<(f64, Vec<f64>)>,
}

impl Witness {
    pub fn position_at(&self, t: f64) -> Vec<f64> {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1.clone();
        }
        for w in k.windows(2) {
            let ((t0, x0), (t1, x1)) = (&w[0], &w[1]);
            if t <= *t1 {
                let u = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
                return x0.iter().zip(x1).map(|(a, b)| a + u * (b - a)).collect();
            }
        }
        k[k.len() - 1].1.clone()
    }

    /// Largest speed over the knots.
    pub fn max_speed(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| {
                let dist = w[0].1.iter().zip(&w[1].1).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let dt = w[1].0 - w[0].0;
                if dt > 0.0 {
                    dist / dt
                } else if dist > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t,x_1..x_d`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let cols: Vec<String> = (1..=self.d).map(|a| format!("x_{a}")).collect();
        writeln!(w, "t,{}", cols.join(","))?;
        for (t, x) in &self.knots {
            let xs: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{t},{}", xs.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub verdict: Verdict,
    /// First slice with an empty frontier.
    pub death_slice: Option<usize>,
    /// Frontier size per examined slice, after the within-slice closure.
    pub frontier: Vec<usize>,
    /// The frontier touched the window edge.
    pub frontier_escaped: bool,
    pub mode: Option<EvasionMode>,
    /// The witness stays at the origin.
    pub static_witness: bool,
    pub witness: Option<Witness>,
}

impl Certificate {
    fn bare(verdict: Verdict) -> Self {
        Certificate {
            verdict,
            death_slice: None,
            frontier: Vec::new(),
            frontier_escaped: false,
            mode: None,
            static_witness: false,
            witness: None,
        }
    }

    pub fn path_length(&self) -> Option<usize> {
        self.witness.as_ref().map(|w| w.knots.len())
    }
}

/// Closure of `seeds` among the cells with `open[k]`, by breadth-first search.
/// Returns the parent of each reached cell (`usize::MAX` for seeds).
fn closure(field: &SliceField, seeds: &[usize], open: &[bool]) -> Vec<Option<usize>> {
    let mut parent = vec![None; open.len()];
    let mut queue = VecDeque::new();
    for &k in seeds {
        if open[k] && parent[k].is_none() {
            parent[k] = Some(usize::MAX);
            queue.push_back(k);
        }
    }
    while let Some(k) = queue.pop_front() {
        for nb in field.neighbours(k) {
            if open[nb] && parent[nb].is_none() {
                parent[nb] = Some(k);
                queue.push_back(nb);
            }
        }
    }
    parent
}

/// Searches for a slice at which no undetected target position remains.
///
/// The target may cross any chain of touching non-blocked cells within a
/// slice; a cell outside the window counts as non-blocked.
pub fn detection_certificate(field: &SliceField) -> Certificate {
    let mut cert = Certificate::bare(Verdict::Inconclusive);
    if field.origin_covered_at_start {
        cert.verdict = Verdict::DetectionCertain;
        cert.death_slice = Some(0);
        cert.frontier.push(0);
        return cert;
    }
    let Some(origin) = field.index(&vec![0; field.d]) else {
        cert.frontier_escaped = true;
        return cert;
    };
    let mut seeds = vec![origin];
    for tau in 0..field.slices {
        let open: Vec<bool> = field.blocked[tau].iter().map(|b| !b).collect();
        let reached: Vec<usize> = closure(field, &seeds, &open)
            .iter()
            .enumerate()
            .filter_map(|(k, p)| p.map(|_| k))
            .collect();
        cert.frontier.push(reached.len());
        if reached.is_empty() {
            cert.verdict = Verdict::DetectionCertain;
            cert.death_slice = Some(tau);
            return cert;
        }
        if reached.iter().any(|&k| field.on_edge(k)) {
            cert.frontier_escaped = true;
            return cert;
        }
        let mut next = vec![false; open.len()];
        for &k in &reached {
            next[k] = true;
            for nb in field.neighbours(k) {
                next[nb] = true;
            }
        }
        seeds = (0..next.len()).filter(|&k| next[k]).collect();
    }
    cert
}

/// Searches for a target trajectory avoiding every detection ball with margin
/// `delta_safe` up to the end of the last slice. Cells outside the window
/// count as occupied.
pub fn evasion_certificate(field: &SliceField, mode: EvasionMode) -> Certificate {
    let mut cert = Certificate::bare(Verdict::Inconclusive);
    cert.mode = Some(mode);
    let t_end = field.slices as f64 * field.beta;
    if field.origin_clear.iter().all(|&c| c) {
        cert.verdict = Verdict::EvasionPossible;
        cert.static_witness = true;
        cert.witness = Some(Witness {
            d: field.d,
            knots: vec![(0.0, vec![0.0; field.d]), (t_end, vec![0.0; field.d])],
        });
        return cert;
    }
    // reached cells at the start of each slice, with the path inside the previous slice
    let mut arrivals: Vec<Vec<(usize, Vec<usize>)>> = Vec::with_capacity(field.slices);
    let mut seeds: Vec<usize> = field.origin_cells();
    let mut from_origin = true;
    for tau in 0..field.slices {
        let open = &field.vacant[tau];
        let starts: Vec<usize> = seeds.iter().copied().filter(|&k| open[k]).collect();
        let mut reached: Vec<(usize, Vec<usize>)> = Vec::new();
        match mode {
            EvasionMode::Closure => {
                let parent = closure(field, &starts, open);
                for k in 0..open.len() {
                    if parent[k].is_some() {
                        let mut path = vec![k];
                        let mut c = k;
                        while let Some(p) = parent[c].filter(|&p| p != usize::MAX) {
                            path.push(p);
                            c = p;
                        }
                        path.reverse();
                        reached.push((k, path));
                    }
                }
            }
            EvasionMode::Hop => {
                let mut seen = vec![false; open.len()];
                for &k in &starts {
                    if !seen[k] {
                        seen[k] = true;
                        reached.push((k, vec![k]));
                    }
                }
                if !from_origin {
                    for &k in &starts {
                        for nb in field.neighbours(k) {
                            if open[nb] && !seen[nb] {
                                seen[nb] = true;
                                reached.push((nb, vec![k, nb]));
                            }
                        }
                    }
                }
            }
        }
        cert.frontier.push(reached.len());
        if reached.is_empty() {
            return cert;
        }
        seeds = reached.iter().map(|r| r.0).collect();
        arrivals.push(reached);
        from_origin = false;
    }
    // walk back from any cell reached at the end
    let mut cell = arrivals[field.slices - 1][0].0;
    let mut legs: Vec<Vec<usize>> = Vec::with_capacity(field.slices);
    for tau in (0..field.slices).rev() {
        let path = arrivals[tau].iter().find(|r| r.0 == cell).map(|r| r.1.clone()).unwrap_or_default();
        cell = path[0];
        legs.push(path);
    }
    legs.reverse();
    let mut knots = vec![(0.0, vec![0.0; field.d])];
    for (tau, leg) in legs.iter().enumerate() {
        let t0 = tau as f64 * field.beta;
        // the first slice starts at the origin, a corner of the first cell
        let pts: Vec<Vec<f64>> = leg.iter().map(|&k| field.centre(k)).collect();
        let n = if tau == 0 { pts.len() } else { pts.len() - 1 };
        if n == 0 {
            knots.push((t0 + field.beta, pts[0].clone()));
            continue;
        }
        let skip = if tau == 0 { 0 } else { 1 };
        for (j, x) in pts.iter().enumerate().skip(skip) {
            let step = if tau == 0 { j + 1 } else { j };
            knots.push((t0 + field.beta * step as f64 / n as f64, x.clone()));
        }
    }
    cert.verdict = Verdict::EvasionPossible;
    cert.witness = Some(Witness { d: field.d, knots });
    cert
}

/// Replays `w` against the sub-step positions: true iff no node comes within
/// `r` of the target at any sub-step of `0..slices`.
pub fn replay_witness(traj: &TrajectorySet, w: &Witness, r: f64, slices: usize, mask: Option<&[bool]>) -> Result<bool> {
    let d = traj.d();
    let s = traj.substeps();
    let torus = traj.torus().map(|(a, b)| (a.as_slice(), b.as_slice()));
    for tau in 0..slices as i64 {
        for j in 0..=s {
            let all = traj.positions_at_step(tau, j)?;
            let pts: Vec<f64> = match mask {
                None => all,
                Some(m) => all
                    .chunks_exact(d)
                    .enumerate()
                    .filter(|(v, _)| m[*v])
                    .flat_map(|(_, x)| x.iter().copied())
                    .collect(),
            };
            let t = (tau as f64 + j as f64 / s as f64) * traj.beta();
            let idx = SpatialIndex::build(d, &pts, r, torus)?;
            if idx.covered(&w.position_at(t), r) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
