//! Per-scale path weights `psi_k` and their integer-multiple surrogates.

use serde::Serialize;

use super::ScaleParams;
use crate::error::{invalid, Result};

/// `ln psi_k`. For `k = 1` the value is `ln min(eps^2 lambda ell^d, nu_term)`
/// where `nu_term = ln(1/(1 - nu_E))` is supplied by the caller.
pub fn ln_psi(p: &ScaleParams, k: usize, nu_term: Option<f64>) -> Result<f64> {
    if k == 0 {
        return Err(invalid("k", "psi is defined for k >= 1"));
    }
    let base = 2.0 * p.eps.ln() + p.lambda.ln();
    if k == 1 {
        let nu = nu_term.ok_or_else(|| invalid("nu_term", "required at scale 1"))?;
        if nu.is_nan() || nu < 0.0 {
            return Err(invalid("nu_term", "must be non-negative"));
        }
        return Ok((base + p.d as f64 * p.ell.ln()).min(nu.ln()));
    }
    Ok(base + p.d as f64 * p.ln_ell(k - 1) - 4.0 * ((k + 1) as f64).ln())
}

pub fn psi(p: &ScaleParams, k: usize, nu_term: Option<f64>) -> Result<f64> {
    ln_psi(p, k, nu_term).map(f64::exp)
}

/// `psi~_j = b_j psi~_2` with `b_j` a positive integer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiTilde {
    /// Exact `b_j`; `None` once it no longer fits in 128 bits.
    pub b: Option<u128>,
    pub ln_b: f64,
    pub ln_psi2: f64,
}

impl PsiTilde {
    pub fn ln_value(&self) -> f64 {
        self.ln_b + self.ln_psi2
    }

    pub fn psi2(&self) -> f64 {
        self.ln_psi2.exp()
    }

    pub fn value(&self) -> f64 {
        self.ln_value().exp()
    }
}

/// `b_2 = 1`; for `j >= 3`, `b_j = 2 m^{(j-2)d} ((j-1)!)^{3d-3} ((j-2)!)^2 (j-3)!`.
pub fn psi_tilde(p: &ScaleParams, j: usize) -> Result<PsiTilde> {
    if j < 2 {
        return Err(invalid("j", "psi~ is defined for j >= 2"));
    }
    let ln_psi2 = ln_psi(p, 2, None)?;
    if j == 2 {
        return Ok(PsiTilde { b: Some(1), ln_b: 0.0, ln_psi2 });
    }
    let d = p.d as u32;
    let lf = |k: usize| (2..=k).map(|i| (i as f64).ln()).sum::<f64>();
    let ln_b = 2f64.ln()
        + ((j - 2) * p.d) as f64 * (p.m as f64).ln()
        + (3 * d - 3) as f64 * lf(j - 1)
        + 2.0 * lf(j - 2)
        + lf(j - 3);
    let fact = |k: usize| (2..=k as u128).try_fold(1u128, |a, i| a.checked_mul(i));
    let b = (|| {
        let mut b = 2u128.checked_mul((p.m as u128).checked_pow((j as u32 - 2) * d)?)?;
        b = b.checked_mul(fact(j - 1)?.checked_pow(3 * d - 3)?)?;
        b = b.checked_mul(fact(j - 2)?.checked_pow(2)?)?;
        b.checked_mul(fact(j - 3)?)
    })();
    Ok(PsiTilde { b, ln_b, ln_psi2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(d: usize, m: u64) -> ScaleParams {
        ScaleParams::new(d, m, 1, 0.5, 1.0, 1.0).unwrap().with_lambda(4.0).unwrap()
    }

    #[test]
    fn psi2_example() {
        let v = psi(&p(2, 28), 2, None).unwrap();
        // eps^2 lambda ell^d / 3^4 = 0.25 * 4 / 81
        assert!((v - 1.0 / 81.0).abs() < 1e-14 * v);
        assert_eq!(psi_tilde(&p(2, 28), 2).unwrap().b, Some(1));
    }

    #[test]
    fn psi1_branches() {
        let q = p(2, 28);
        assert!((psi(&q, 1, Some(10.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((psi(&q, 1, Some(0.3)).unwrap() - 0.3).abs() < 1e-15);
        assert!(psi(&q, 1, None).is_err());
    }

    #[test]
    fn ratio_at_three() {
        for m in [7u64, 14, 21] {
            let q = p(1, m);
            let r = psi(&q, 3, None).unwrap() / psi_tilde(&q, 3).unwrap().value();
            assert!((r - 1.265625).abs() < 1e-12, "m={m}: {r}");
        }
    }

    #[test]
    fn b_examples() {
        let q = p(1, 14);
        assert_eq!(psi_tilde(&q, 3).unwrap().b, Some(28));
        let q = p(2, 28);
        let t = psi_tilde(&q, 4).unwrap();
        assert_eq!(t.b, Some(1728 * 28u128.pow(4)));
        assert!((t.ln_b - (t.b.unwrap() as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn b_overflow_flag() {
        let t = psi_tilde(&p(3, 56), 40).unwrap();
        assert!(t.b.is_none());
        assert!(t.ln_b.is_finite());
    }
}
