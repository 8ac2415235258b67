//! Multi-scale space-time tessellation.
//!
//! Lengths are kept as exact integer multiples of the scale-0 side `ell/m`
//! and times as integer multiples of the scale-1 slice length `beta`, so
//! containment and intersection tests never round.

mod counting;
mod regions;
pub mod verify;
mod weights;

pub use counting::{chi, count_support_adjacent, phi_region_bound, support_reach, CellWindow};
pub use regions::{
    adjacent, descendant_window, region, relation, support, time_region, Cell, IBox, IInterval, Region,
    Relation, SpaceKind, TimeKind,
};
pub use weights::{ln_psi, psi, psi_tilde, PsiTilde};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Parameter bundle of the tessellation and the node system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub d: usize,
    /// Scale-1 cube side.
    pub ell: f64,
    /// Scale-1 slice length.
    pub beta: f64,
    pub eps: f64,
    pub eta: u64,
    pub m: u64,
    pub n: u64,
    /// Displacement window multiplier.
    pub w: f64,
    pub kappa: usize,
    pub lambda: f64,
    pub r: f64,
    pub c_mix: f64,
}

/// One row of the scale tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleRow {
    pub ell: f64,
    /// `None` at scale 0.
    pub beta: Option<f64>,
    pub eps: f64,
}

/// Integer `n` with `n^d = q`, if any.
pub fn integer_root(q: u64, d: usize) -> Option<u64> {
    if d == 0 {
        return None;
    }
    let guess = (q as f64).powf(1.0 / d as f64).round() as u64;
    (guess.saturating_sub(1)..=guess + 1).find(|&n| n.checked_pow(d as u32) == Some(q))
}

impl ScaleParams {
    /// Builds a validated bundle with `beta` derived from `c_mix`; `kappa = 2`,
    /// `lambda = 1`, `w = 1` and `r = 2 sqrt(d) ell` until overridden.
    pub fn new(d: usize, m: u64, eta: u64, eps: f64, ell: f64, c_mix: f64) -> Result<Self> {
        if eta == 0 {
            return Err(invalid("eta", "must be a positive integer"));
        }
        if !m.is_multiple_of(7 * eta) {
            return Err(invalid(
                "m",
                format!("n^d = m/(7*eta) needs m divisible by 7*eta (m={m}, eta={eta})"),
            ));
        }
        let n = integer_root(m / (7 * eta), d).ok_or_else(|| {
            invalid(
                "m",
                format!("n^d = m/(7*eta) has no integer solution n (m={m}, eta={eta}, d={d})"),
            )
        })?;
        let beta = c_mix * (ell / m as f64).powi(2) / (eps * eps);
        let p = ScaleParams {
            d,
            ell,
            beta,
            eps,
            eta,
            m,
            n,
            w: 1.0,
            kappa: 2,
            lambda: 1.0,
            r: 2.0 * (d as f64).sqrt() * ell,
            c_mix,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_kappa(mut self, kappa: usize) -> Result<Self> {
        self.kappa = kappa;
        self.validate()?;
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn with_r(mut self, r: f64) -> Result<Self> {
        self.r = r;
        self.validate()?;
        Ok(self)
    }

    pub fn with_w(mut self, w: f64) -> Result<Self> {
        self.w = w;
        self.validate()?;
        Ok(self)
    }

    /// Checks every invariant; returns soft warnings on success.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.d == 0 {
            return Err(invalid("d", "dimension must be positive"));
        }
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return Err(invalid("ell", "must be positive and finite"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(invalid("eps", "must lie in (0,1)"));
        }
        if self.eta == 0 {
            return Err(invalid("eta", "must be a positive integer"));
        }
        if !(self.c_mix > 0.0 && self.c_mix.is_finite()) {
            return Err(invalid("c_mix", "must be positive"));
        }
        if self.m == 0 || self.n == 0 {
            return Err(invalid("m", "m and n must be positive"));
        }
        let q = self.n.checked_pow(self.d as u32);
        if q.map(|q| q.checked_mul(7 * self.eta)) != Some(Some(self.m)) {
            return Err(invalid(
                "n",
                format!(
                    "n^d = m/(7*eta) must hold exactly (n={}, d={}, m={}, eta={})",
                    self.n, self.d, self.m, self.eta
                ),
            ));
        }
        let beta = self.c_mix * (self.ell / self.m as f64).powi(2) / (self.eps * self.eps);
        if (self.beta - beta).abs() > 1e-12 * beta {
            return Err(invalid(
                "beta",
                format!("must equal c_mix*(ell/m)^2/eps^2 = {beta}, got {}", self.beta),
            ));
        }
        if self.kappa == 0 {
            return Err(invalid("kappa", "must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", "must be non-negative"));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(invalid("r", "must be non-negative"));
        }
        // max{eta,2} beta <= beta_2, with beta_2 / beta = 16 m^2
        let need = self.eta.max(2) as u128;
        if need > 16 * (self.m as u128) * (self.m as u128) {
            return Err(invalid("eta", "max{eta,2}*beta must not exceed beta_2"));
        }
        if self.ln_ell(self.kappa) >= f64::MAX.ln() || self.ln_beta(self.kappa) >= f64::MAX.ln() {
            return Err(invalid("kappa", format!("scale {} overflows double precision", self.kappa)));
        }
        if self.n < 2 {
            warnings.push(format!("n = {} < 2: m = {} is below 7*eta*2^d", self.n, self.m));
        }
        let w_floor = self.w_floor();
        if self.w < w_floor {
            warnings.push(format!("w = {} is below the admissible floor {w_floor:.4}", self.w));
        }
        Ok(warnings)
    }

    /// Smallest displacement multiplier for which the window argument applies.
    pub fn w_floor(&self) -> f64 {
        (18.0 * self.eta as f64 * (self.beta / (self.ell * self.ell)) * (8.0 * self.d as f64 / self.eps).ln())
            .sqrt()
    }

    /// `ell_k / ell_{k-1} = m k^3` for `k >= 1`.
    pub fn ell_ratio(&self, k: usize) -> u128 {
        debug_assert!(k >= 1);
        let k = k as u128;
        self.m as u128 * k * k * k
    }

    /// `beta_{k+1} / beta_k = m^2 k^2 (k+1)^4` for `k >= 1`.
    pub fn beta_ratio(&self, k: usize) -> u128 {
        debug_assert!(k >= 1);
        let (m, k) = (self.m as u128, k as u128);
        m * m * k * k * (k + 1).pow(4)
    }

    /// `ell_k` in units of `ell_0 = ell/m`.
    pub fn ell_units(&self, k: usize) -> Result<i128> {
        (1..=k).try_fold(1i128, |acc, s| checked_mul(acc, self.ell_ratio(s) as i128))
    }

    /// `ell_{k+j} / ell_k` as an exact integer.
    pub fn ell_span(&self, k: usize, j: usize) -> Result<i128> {
        (k + 1..=k + j).try_fold(1i128, |acc, s| checked_mul(acc, self.ell_ratio(s) as i128))
    }

    /// `beta_k` in units of `beta_1` (`k >= 1`).
    pub fn beta_units(&self, k: usize) -> Result<i128> {
        (1..k).try_fold(1i128, |acc, s| checked_mul(acc, self.beta_ratio(s) as i128))
    }

    pub fn ln_ell(&self, k: usize) -> f64 {
        if k == 0 {
            return self.ell.ln() - (self.m as f64).ln();
        }
        self.ell.ln() + (k - 1) as f64 * (self.m as f64).ln() + 3.0 * ln_fact(k)
    }

    /// `ln beta_k` for `k >= 1`.
    pub fn ln_beta(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        self.c_mix.ln() + 2.0 * self.ln_ell(k - 1) + 4.0 * (k as f64).ln() - 2.0 * self.eps.ln()
    }

    /// `eps_k`: `eps_0 = 2 eps`, `eps_1 = eps`, `eps_k = eps_{k-1} - eps/k^2`.
    pub fn eps_k(&self, k: usize) -> f64 {
        if k == 0 {
            return 2.0 * self.eps;
        }
        (2..=k).fold(self.eps, |e, i| e - self.eps / (i * i) as f64)
    }

    pub fn ell_k(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Ok(self.ell / self.m as f64);
        }
        let v = match self.ell_span(1, k - 1) {
            Ok(u) => self.ell * u as f64,
            Err(_) => self.ln_ell(k).exp(),
        };
        finite(v, "ell", k)
    }

    pub fn beta_k(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::Range("beta_k is defined for k >= 1".into()));
        }
        let v = match self.beta_units(k) {
            Ok(u) => self.beta * u as f64,
            Err(_) => self.ln_beta(k).exp(),
        };
        finite(v, "beta", k)
    }

    /// `(ell_k, beta_k, eps_k)` for `0 <= k <= kappa`.
    pub fn scale_tables(&self, k: usize) -> Result<ScaleRow> {
        if k > self.kappa {
            return Err(Error::Range(format!("scale {k} exceeds kappa = {}", self.kappa)));
        }
        Ok(ScaleRow {
            ell: self.ell_k(k)?,
            beta: if k == 0 { None } else { Some(self.beta_k(k)?) },
            eps: self.eps_k(k),
        })
    }

    /// Scale-`k` cube side multiplied by `eta m n (k+1)^3`: the base half-width in cubes.
    pub fn base_radius(&self, k: usize) -> i128 {
        let k1 = (k + 1) as i128;
        (self.eta * self.m * self.n) as i128 * k1 * k1 * k1
    }

    /// `pi_k^{(j)}(i)`: index of the scale-`(k+j)` cube containing scale-`k` cube `i`.
    pub fn pi(&self, k: usize, j: usize, i: &[i64]) -> Result<Vec<i64>> {
        self.check_lift(k, j)?;
        let span = self.ell_span(k, j)?;
        Ok(i.iter().map(|&x| (x as i128).div_euclid(span) as i64).collect())
    }

    /// One-axis version of [`ScaleParams::pi`].
    pub fn pi_1d(&self, k: usize, j: usize, x: i64) -> Result<i64> {
        self.check_lift(k, j)?;
        Ok((x as i128).div_euclid(self.ell_span(k, j)?) as i64)
    }

    /// `gamma_k^{(j)}(tau)` with half-open slice membership.
    pub fn gamma(&self, k: usize, j: usize, tau: i64) -> Result<i64> {
        if k == 0 {
            return Err(Error::Range("gamma is defined for k >= 1".into()));
        }
        self.check_lift(k, j)?;
        let mut t = tau as i128;
        for s in k..k + j {
            t = t.div_euclid(self.beta_ratio(s) as i128) - 1;
        }
        i64::try_from(t).map_err(|_| Error::Range("gamma overflow".into()))
    }

    fn check_lift(&self, k: usize, j: usize) -> Result<()> {
        if k + j > self.kappa {
            return Err(Error::Range(format!(
                "lift to scale {} exceeds kappa = {}",
                k + j,
                self.kappa
            )));
        }
        Ok(())
    }
}

pub(crate) fn checked_mul(a: i128, b: i128) -> Result<i128> {
    a.checked_mul(b)
        .ok_or_else(|| Error::Range("exact scale arithmetic overflowed 128 bits".into()))
}

pub(crate) fn checked_add(a: i128, b: i128) -> Result<i128> {
    a.checked_add(b)
        .ok_or_else(|| Error::Range("exact scale arithmetic overflowed 128 bits".into()))
}

fn ln_fact(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

fn finite(v: f64, what: &str, k: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Range(format!("{what}_{k} overflows double precision")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p28() -> ScaleParams {
        ScaleParams::new(2, 28, 1, 0.5, 1.0, 1.0).unwrap().with_kappa(4).unwrap()
    }

    #[test]
    fn n_from_m() {
        assert_eq!(p28().n, 2);
        assert_eq!(ScaleParams::new(1, 14, 1, 0.5, 1.0, 1.0).unwrap().n, 2);
        assert_eq!(ScaleParams::new(3, 56, 1, 0.5, 1.0, 1.0).unwrap().n, 2);
        assert!(ScaleParams::new(2, 30, 1, 0.5, 1.0, 1.0).is_err());
        assert!(ScaleParams::new(2, 42, 1, 0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn ell3_value() {
        let p = p28();
        assert_eq!(p.ell_k(3).unwrap(), 169344.0);
        assert_eq!(p.ell_units(3).unwrap(), 28 * 169344);
        assert_eq!(p.ell_k(0).unwrap(), 1.0 / 28.0);
    }

    #[test]
    fn eps_sequence() {
        let p = p28();
        assert_eq!(p.eps_k(0), 1.0);
        assert_eq!(p.eps_k(1), 0.5);
        assert_eq!(p.eps_k(2), 0.375);
        for k in 1..200 {
            assert!(p.eps_k(k) >= p.eps / 4.0);
        }
    }

    #[test]
    fn beta_ratio_example() {
        let p = p28();
        assert_eq!(p.beta_ratio(1), 12544);
        assert_eq!(p.beta_units(2).unwrap(), 12544);
        let b1 = p.beta_k(1).unwrap();
        let b2 = p.beta_k(2).unwrap();
        assert!((b2 / b1 - 12544.0).abs() < 1e-9);
        // beta_2 = 16 c_mix ell^2 / eps^2 regardless of m
        assert!((b2 - 64.0).abs() < 1e-9);
    }

    #[test]
    fn log_space_matches_exact() {
        let p = p28();
        for k in 1..=4 {
            assert!((p.ln_ell(k) - p.ell_k(k).unwrap().ln()).abs() < 1e-12);
            assert!((p.ln_beta(k) - p.beta_k(k).unwrap().ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_tables_pre_and_overflow() {
        let p = p28();
        assert!(p.scale_tables(5).is_err());
        let row = p.scale_tables(0).unwrap();
        assert!(row.beta.is_none());
        let big = ScaleParams::new(1, 7, 1, 0.5, 1.0, 1.0).unwrap();
        assert!(big.clone().with_kappa(60).is_err());
        let mut unchecked = big;
        unchecked.kappa = 200;
        assert!(matches!(unchecked.ell_k(200), Err(Error::Range(_))));
    }

    #[test]
    fn pi_examples() {
        let p = p28();
        assert_eq!(p.pi(1, 0, &[5, -3]).unwrap(), vec![5, -3]);
        assert_eq!(p.pi(1, 1, &[224, 0]).unwrap(), vec![1, 0]);
        assert_eq!(p.pi(1, 1, &[223, -1]).unwrap(), vec![0, -1]);
        assert!(p.pi(3, 2, &[0, 0]).is_err());
    }

    #[test]
    fn gamma_examples() {
        let p = p28();
        assert_eq!(p.gamma(1, 0, 17).unwrap(), 17);
        assert_eq!(p.gamma(1, 1, 0).unwrap(), -1);
        let r = p.beta_ratio(1) as i64;
        for q in [-2i64, 0, 3] {
            let t = q * r;
            let g = p.gamma(1, 1, t).unwrap();
            assert_eq!(g, p.gamma(1, 1, t + 1).unwrap());
            assert_eq!(g, p.gamma(1, 1, t + 2).unwrap());
            assert_eq!(g, q - 1);
        }
    }

    #[test]
    fn w_floor_warning() {
        let p = ScaleParams::new(2, 28, 1, 0.5, 1.0, 1.0).unwrap();
        assert!(p.w_floor() < 1.0);
        let w = p.clone().with_w(0.01).unwrap().validate().unwrap();
        assert!(w.iter().any(|s| s.contains("floor")));
        let low_n = ScaleParams::new(1, 7, 1, 0.5, 1.0, 1.0).unwrap();
        assert!(low_n.validate().unwrap().iter().any(|s| s.contains("n = 1")));
    }
}
