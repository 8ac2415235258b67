//! Adaptive Simpson quadrature, iterated over axes for low-dimensional boxes.

const MAX_DEPTH: u32 = 48;

/// Integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    refine(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // never ask for more than the arithmetic can deliver
    let tol = tol.max(4.0 * f64::EPSILON * (left.abs() + right.abs()));
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Like [`simpson`] but splits `[a, b]` at the given interior break points
/// (kinks of the integrand).
pub fn simpson_split<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let pieces = (pts.len() - 1) as f64;
    pts.windows(2)
        .map(|w| simpson(f, w[0], w[1], tol / pieces))
        .sum()
}

/// Iterated integral of `f` over the box `lo..hi` (d <= 3), splitting every
/// axis at 0 when it lies inside.
pub fn integrate_box<F: Fn(&[f64]) -> f64>(f: &F, lo: &[f64], hi: &[f64], tol: f64) -> f64 {
    assert_eq!(lo.len(), hi.len());
    let x = vec![0.0; lo.len()];
    nested(f, lo, hi, tol, 0, &x)
}

fn nested<F: Fn(&[f64]) -> f64>(f: &F, lo: &[f64], hi: &[f64], tol: f64, axis: usize, x: &[f64]) -> f64 {
    let last = axis + 1 == lo.len();
    let inner_tol = 0.5 * tol / (hi[axis] - lo[axis]).max(1e-300);
    let g = |t: f64| {
        let mut y = x.to_vec();
        y[axis] = t;
        if last {
            f(&y)
        } else {
            nested(f, lo, hi, inner_tol, axis + 1, &y)
        }
    };
    let outer_tol = if last { tol } else { 0.5 * tol };
    simpson_split(&g, lo[axis], hi[axis], &[0.0], outer_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = simpson(&|x: f64| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((v - 0.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mass() {
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let v = simpson(&phi, -10.0, 10.0, 1e-10);
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kink_split() {
        let v = simpson_split(&|x: f64| x.abs(), -1.0, 3.0, &[0.0], 1e-12);
        assert!((v - 5.0).abs() < 1e-12);
    }

    #[test]
    fn box_2d_radial() {
        // integral of exp(-|z|) over [-1,1]^2 against a fine midpoint sum
        let f = |z: &[f64]| (-(z[0] * z[0] + z[1] * z[1]).sqrt()).exp();
        let v = integrate_box(&f, &[-1.0, -1.0], &[1.0, 1.0], 1e-9);
        let n = 2000;
        let h = 2.0 / n as f64;
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                let x = -1.0 + (a as f64 + 0.5) * h;
                let y = -1.0 + (b as f64 + 0.5) * h;
                s += f(&[x, y]) * h * h;
            }
        }
        assert!((v - s).abs() < 1e-6, "{v} vs {s}");
    }
}
