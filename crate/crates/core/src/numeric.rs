//! Scalar quadrature, one-dimensional optimization and a small dense SVD.

use nalgebra::{DMatrix, DVector};

/// Result of [`adaptive_simpson`].
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    /// Sum of the local Richardson error estimates.
    pub error: f64,
    pub evaluations: usize,
}

/// Adaptive Simpson quadrature to an absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Quadrature {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut evals = 3;
    let mut err = 0.0;
    let value = simpson_rec(&f, a, b, fa, fm, fb, whole, tol.max(1e-15), 50, &mut evals, &mut err);
    Quadrature { value, error: err, evaluations: evals }
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    evals: &mut usize,
    err: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    *evals += 2;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        *err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, evals, err)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, evals, err)
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a maximum of `f` on `[a, b]`; returns `(x, f(x))`.
/// The endpoints are evaluated too, so a monotone `f` yields its boundary maximum.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iter = 0;
    while hi - lo > tol && iter < 200 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        iter += 1;
    }
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for x in [a, b] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Golden-section search for a minimum; returns `(x, f(x))`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (x, v) = golden_max(|x| -f(x), a, b, tol);
    (x, -v)
}

/// Least-squares slope of `y ≈ c·x` through the origin and its coefficient
/// of determination (uncentered, as is usual for through-origin fits).
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> (f64, f64) {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let c = sxy / sxx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - c * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    (c, r2)
}

/// Thin SVD `M = U Σ Vᵀ` of a square or tall matrix by one-sided Jacobi.
///
/// Meant for the small `s×s` cosine matrices of principal angles, where it is
/// accurate to a few ulps in every singular value. The nalgebra bidiagonal
/// SVD can return a decomposition with a large residual when singular
/// values cluster at 1, which is exactly the shared-subspace case.
/// Singular values are returned in descending order.
pub fn jacobi_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (r, c) = m.shape();
    assert!(r >= c, "jacobi_svd needs rows >= cols");
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(c, c);
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..c {
            for j in i + 1..c {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dot(&a.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for k in 0..mat.nrows() {
                        let (x, y) = (mat[(k, i)], mat[(k, j)]);
                        mat[(k, i)] = cs * x - sn * y;
                        mat[(k, j)] = sn * x + cs * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..c).map(|k| a.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let scale = norms.iter().copied().fold(0.0, f64::max);
    let mut u = DMatrix::<f64>::zeros(r, c);
    let mut vs = DMatrix::<f64>::zeros(c, c);
    let mut sv = DVector::<f64>::zeros(c);
    for (dst, &k) in order.iter().enumerate() {
        sv[dst] = norms[k];
        vs.set_column(dst, &v.column(k));
        if norms[k] > 1e-300 && norms[k] > f64::EPSILON * scale * 1e-3 {
            u.set_column(dst, &(a.column(k) / norms[k]));
        }
    }
    // Columns for (numerically) zero singular values: complete to an orthonormal set.
    for dst in 0..c {
        if u.column(dst).norm_squared() > 0.0 {
            continue;
        }
        for e in 0..r {
            let mut x = DVector::<f64>::zeros(r);
            x[e] = 1.0;
            for _ in 0..2 {
                for k in 0..c {
                    let proj = u.column(k).dot(&x);
                    x -= u.column(k) * proj;
                }
            }
            let n = x.norm();
            if n > 0.5 {
                u.set_column(dst, &(x / n));
                break;
            }
        }
    }
    (u, sv, vs)
}
