//! Block decoupling of a quasi-triangular Schur form.
//!
//! For diagonal blocks `i < j` belonging to different groups, the coupling
//! `T_ij` is removed by the similarity `I + E_ij X` where `X` solves the
//! Sylvester equation `T_ii X − X T_jj = −T_ij`. Columns are processed left to
//! right and rows bottom to top, so every zeroed block stays zero.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Returns `Y` with `Y⁻¹ T Y` block diagonal with respect to `groups`.
/// `blocks[k] = (start, size)`; `groups[k]` labels block `k`.
pub fn decouple(t: &DMatrix<f64>, blocks: &[(usize, usize)], groups: &[usize]) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let mut t = t.clone();
    let mut y = DMatrix::<f64>::identity(n, n);
    for j in 1..blocks.len() {
        let (sj, nj) = blocks[j];
        for i in (0..j).rev() {
            if groups[i] == groups[j] {
                continue;
            }
            let (si, ni) = blocks[i];
            let tij = t.view((si, sj), (ni, nj)).clone_owned();
            if tij.amax() == 0.0 {
                continue;
            }
            let tii = t.view((si, si), (ni, ni)).clone_owned();
            let tjj = t.view((sj, sj), (nj, nj)).clone_owned();
            let x = solve_sylvester(&tii, &tjj, &(-tij))?;
            // T ← T (I + E X): column block j gains T[:, block i] X.
            let left = t.view((0, si), (si + ni, ni)) * &x;
            let mut cols = t.view_mut((0, sj), (si + ni, nj));
            cols += left;
            // T ← (I − E X) T: row block i loses X T[block j, :].
            let right = &x * t.view((sj, sj), (nj, n - sj));
            let mut rows = t.view_mut((si, sj), (ni, n - sj));
            rows -= right;
            let acc = y.view((0, si), (n, ni)) * &x;
            let mut ycols = y.view_mut((0, sj), (n, nj));
            ycols += acc;
        }
    }
    Ok(y)
}

/// Solves `A X − X B = C` for small `A` (`a×a`) and `B` (`b×b`).
fn solve_sylvester(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (na, nb) = (a.nrows(), b.nrows());
    let m = na * nb;
    let mut k = DMatrix::<f64>::zeros(m, m);
    for q in 0..nb {
        for p in 0..na {
            let row = q * na + p;
            for r in 0..na {
                k[(row, q * na + r)] += a[(p, r)];
            }
            for s in 0..nb {
                k[(row, s * na + p)] -= b[(s, q)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(c.as_slice());
    let sol = k.lu().solve(&rhs).ok_or_else(|| {
        Error::DimensionMismatch("Sylvester equation singular: groups share an eigenvalue".into())
    })?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::DimensionMismatch("Sylvester equation singular: groups share an eigenvalue".into()));
    }
    Ok(DMatrix::from_column_slice(na, nb, sol.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sylvester_small() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -2.0, 1.0]);
        let b = DMatrix::from_row_slice(1, 1, &[3.0]);
        let c = DMatrix::from_row_slice(2, 1, &[1.0, 4.0]);
        let x = solve_sylvester(&a, &b, &c).unwrap();
        assert!((&a * &x - &x * &b - c).amax() < 1e-14);
    }

    #[test]
    fn decoupled_form_is_block_diagonal() {
        let t = DMatrix::from_row_slice(4, 4, &[
            1.0, 2.0, 0.5, -1.0, -2.0, 1.0, 3.0, 2.0, 0.0, 0.0, 4.0, 1.0, 0.0, 0.0, 0.0, -3.0,
        ]);
        let blocks = [(0, 2), (2, 1), (3, 1)];
        let y = decouple(&t, &blocks, &[0, 1, 2]).unwrap();
        let d = y.clone().try_inverse().unwrap() * &t * &y;
        assert!(d.view((0, 2), (2, 2)).amax() < 1e-13);
        assert!(d[(2, 3)].abs() < 1e-13);
    }
}
