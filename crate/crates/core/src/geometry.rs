//! Orthonormal frames, principal angles and the Grassmann metric.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::jacobi_svd;

pub type DenseMatrix = DMatrix<f64>;

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-12;

/// A `d × s` matrix with orthonormal columns, standing for the subspace it spans.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    q: DMatrix<f64>,
}

impl Frame {
    /// Wraps a matrix whose columns are already orthonormal to working precision.
    /// Callers outside the crate should go through [`orthonormalize`].
    pub(crate) fn from_orthonormal(q: DMatrix<f64>) -> Self {
        debug_assert!(orthonormality_defect(&q) < 1e-10);
        Frame { q }
    }

    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        orthonormalize(m)
    }

    /// Span of a single nonzero vector.
    pub fn line(v: &[f64]) -> Result<Self> {
        orthonormalize(&DMatrix::from_column_slice(v.len(), 1, v))
    }

    /// Span of the listed standard basis vectors of `R^d`.
    pub fn coordinate(d: usize, idx: &[usize]) -> Result<Self> {
        let mut q = DMatrix::zeros(d, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            if i >= d {
                return Err(Error::DimensionMismatch(format!("basis index {i} out of range for d = {d}")));
            }
            q[(i, c)] = 1.0;
        }
        orthonormalize(&q)
    }

    /// Haar-distributed random frame: QR of a standard normal matrix.
    pub fn random<R: Rng + ?Sized>(d: usize, s: usize, rng: &mut R) -> Self {
        loop {
            let m = DMatrix::from_fn(d, s, |_, _| rng.sample::<f64, _>(StandardNormal));
            if let Ok(f) = orthonormalize(&m) {
                return f;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.q
    }

    /// Orthogonal projector onto the span.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.q * self.q.transpose()
    }
}

/// `max |QᵀQ − I|` over all entries.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Orthonormal basis of the column space of a full-rank `d × s` matrix. The
/// rank guard uses singular values; the basis comes from [`qr_positive`].
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<Frame> {
    let (d, s) = m.shape();
    if s == 0 || s > d {
        return Err(Error::RankDeficient { rank: s.min(d), cols: s });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::RankDeficient { rank: 0, cols: s });
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        let rank = sv.iter().filter(|&&x| x > RANK_TOL * smax).count();
        return Err(Error::RankDeficient { rank, cols: s });
    }
    Ok(Frame { q: qr_positive(m.clone()) })
}

/// Orthonormal basis by modified Gram–Schmidt applied twice ("twice is
/// enough"); equivalent to the Q factor of a QR decomposition with positive
/// `diag(R)`, and exact on input that is already orthonormal. No rank check.
pub(crate) fn qr_positive(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let (d, s) = m.shape();
    for j in 0..s {
        for _pass in 0..2 {
            for i in 0..j {
                let mut dot = 0.0;
                for r in 0..d {
                    dot += m[(r, i)] * m[(r, j)];
                }
                if dot != 0.0 {
                    for r in 0..d {
                        let v = m[(r, i)];
                        m[(r, j)] -= dot * v;
                    }
                }
            }
        }
        let n = norm(m.column(j).as_slice());
        if n != 1.0 {
            m.column_mut(j).unscale_mut(n);
        }
    }
    m
}

/// Principal angles with one pair of principal vectors per angle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrincipalAngleSet {
    /// Ascending, in `[0, π/2]`.
    pub angles: Vec<f64>,
    /// `(v_j, w_j)` with `v_jᵀ w_j = cos(angles[j])`.
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

impl PrincipalAngleSet {
    pub fn max_angle(&self) -> f64 {
        self.angles.last().copied().unwrap_or(0.0)
    }

    pub fn cosines(&self) -> Vec<f64> {
        self.angles.iter().map(|a| a.cos()).collect()
    }
}

fn check_pair(p: &Frame, q: &Frame) -> Result<()> {
    if p.dim() != q.dim() || p.rank() != q.rank() {
        return Err(Error::DimensionMismatch(format!(
            "frames are {}x{} and {}x{}",
            p.dim(),
            p.rank(),
            q.dim(),
            q.rank()
        )));
    }
    Ok(())
}

/// Principal angles between `span(P)` and `span(Q)`.
///
/// Cosines come from the SVD of `PᵀQ`; angles below π/4 are recomputed from
/// the sines, i.e. the singular values of `Q − P PᵀQ`, because `acos` loses
/// half the digits near zero.
pub fn principal_angles(p: &Frame, q: &Frame) -> Result<PrincipalAngleSet> {
    check_pair(p, q)?;
    let s = p.rank();
    let m = p.matrix().transpose() * q.matrix();
    let (u, sv, v) = jacobi_svd(&m);
    let resid = q.matrix() - p.matrix() * &m;
    let mut sines: Vec<f64> = jacobi_svd(&resid).1.iter().map(|x| x.clamp(0.0, 1.0)).collect();
    sines.reverse();

    let mut angles = Vec::with_capacity(s);
    let mut pairs = Vec::with_capacity(s);
    for j in 0..s {
        let c = sv[j].clamp(0.0, 1.0);
        let from_sine = sines[j].asin();
        let angle = if from_sine < PI / 4.0 { from_sine } else { c.acos() };
        angles.push(angle);
        let pv = p.matrix() * u.column(j);
        let qw = q.matrix() * v.column(j);
        pairs.push((pv.iter().copied().collect(), qw.iter().copied().collect()));
    }
    Ok(PrincipalAngleSet { angles, pairs })
}

/// Largest principal angle, the quantity averaged by every angular value.
pub fn max_angle(p: &Frame, q: &Frame) -> Result<f64> {
    check_pair(p, q)?;
    if p.rank() == 1 {
        return Ok(line_angle(p.matrix().as_slice(), q.matrix().as_slice()));
    }
    Ok(max_angle_unchecked(p.matrix(), q.matrix()))
}

/// Largest principal angle between two orthonormal bases of equal shape.
pub(crate) fn max_angle_unchecked(p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let m = p.transpose() * q;
    let resid = q - p * &m;
    if q.ncols() == 2 {
        return max_angle_planes(&m, &resid);
    }
    let smax = jacobi_svd(&resid).1[0].clamp(0.0, 1.0);
    let a = smax.asin();
    if a < PI / 4.0 {
        a
    } else {
        let cmin = jacobi_svd(&m).1.iter().copied().fold(1.0, f64::min).clamp(0.0, 1.0);
        cmin.acos()
    }
}

/// Closed form for `s = 2` using 2×2 Gram matrices: `σ_max(R)` for the sine
/// and `|det M| / σ_max(M)` for the smallest cosine.
fn max_angle_planes(m: &DMatrix<f64>, resid: &DMatrix<f64>) -> f64 {
    let g = resid.transpose() * resid;
    let smax = lambda_max_sym2(g[(0, 0)], g[(0, 1)], g[(1, 1)]).sqrt().clamp(0.0, 1.0);
    let a = smax.asin();
    if a < PI / 4.0 {
        return a;
    }
    let h = m.transpose() * m;
    let mmax = lambda_max_sym2(h[(0, 0)], h[(0, 1)], h[(1, 1)]).sqrt();
    let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).abs();
    let cmin = if mmax > 0.0 { det / mmax } else { 0.0 };
    cmin.clamp(0.0, 1.0).acos()
}

fn lambda_max_sym2(a: f64, b: f64, c: f64) -> f64 {
    let h = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (h + r).max(0.0)
}

/// Angle in `[0, π/2]` between the lines spanned by two nonzero vectors.
pub fn line_angle(u: &[f64], v: &[f64]) -> f64 {
    let nu = norm(u);
    let nv = norm(v);
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv);
    let mut perp2 = 0.0;
    for (a, b) in u.iter().zip(v) {
        let r = b / nv - dot * a / nu;
        perp2 += r * r;
    }
    perp2.sqrt().atan2(dot.abs())
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.iter().map(|x| (x / scale) * (x / scale)).sum::<f64>().sqrt()
}

/// `‖P_V − P_W‖₂`, the Grassmann distance.
pub fn grassmann_distance(p: &Frame, q: &Frame) -> Result<f64> {
    check_pair(p, q)?;
    let diff = p.projector() - q.projector();
    Ok(diff.singular_values().max())
}

/// Folds an angle into `[0, π/2]`: `min(|x|, π − |x|)`.
pub fn chi(x: f64) -> f64 {
    let a = x.abs().min(PI);
    a.min(PI - a).clamp(0.0, FRAC_PI_2)
}

/// Unit vectors on `S^{m-1}` parameterized by `m − 1` hyperspherical angles,
/// the last one restricted to `[0, π)` because lines ignore sign.
fn sphere_grid(m: usize, grid: usize) -> Vec<Vec<f64>> {
    if m == 1 {
        return vec![vec![1.0]];
    }
    let k = m - 1;
    let total = grid.pow(k as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; k];
    for _ in 0..total {
        let mut x = vec![0.0; m];
        let mut sin_prod = 1.0;
        for a in 0..k {
            let t = if a + 1 == k {
                PI * idx[a] as f64 / grid as f64
            } else {
                PI * idx[a] as f64 / (grid - 1).max(1) as f64
            };
            x[a] = sin_prod * t.cos();
            sin_prod *= t.sin();
        }
        x[k] = sin_prod;
        out.push(x);
        for a in 0..k {
            idx[a] += 1;
            if idx[a] < grid {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

/// Number of objective evaluations the brute-force oracle would perform.
pub fn minmax_oracle_cost(s: usize, grid: usize) -> f64 {
    let per_sphere = (grid as f64).powi(s.saturating_sub(1).max(1) as i32);
    per_sphere * per_sphere
}

/// Brute-force `max_{v ∈ V} min_{w ∈ W} ∠(v, w)` over unit-sphere grids in
/// both subspaces. Slow; exists to cross-check [`max_angle`].
pub fn minmax_angle_oracle(p: &Frame, q: &Frame, grid: usize) -> Result<f64> {
    check_pair(p, q)?;
    let s = p.rank();
    let cost = minmax_oracle_cost(s, grid);
    if cost > 1e8 || grid == 0 {
        return Err(Error::OracleTooLarge { evaluations: cost });
    }
    let coeffs = sphere_grid(s, grid);
    let to_vecs = |f: &Frame| -> Vec<DVector<f64>> {
        coeffs.iter().map(|c| f.matrix() * DVector::from_column_slice(c)).collect()
    };
    let vs = to_vecs(p);
    let ws = to_vecs(q);
    let mut best: f64 = 0.0;
    for v in &vs {
        let mut inner = FRAC_PI_2;
        for w in &ws {
            inner = inner.min(line_angle(v.as_slice(), w.as_slice()));
        }
        best = best.max(inner);
    }
    Ok(best)
}

/// Worst-case discretization error of [`minmax_angle_oracle`].
pub fn minmax_oracle_resolution(s: usize, grid: usize) -> f64 {
    if s == 1 {
        1e-12
    } else {
        PI * (s - 1) as f64 / (grid - 1).max(1) as f64
    }
}

/// Spectral condition number `σ_max / σ_min`.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    sv.max() / sv.min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn frame(rows: usize, cols: usize, data: &[f64]) -> Frame {
        orthonormalize(&DMatrix::from_row_slice(rows, cols, data)).unwrap()
    }

    #[test]
    fn orthonormalize_keeps_orthonormal_input() {
        let f = frame(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(f.matrix(), &DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn orthonormalize_normalizes_a_line() {
        let f = Frame::line(&[1.0, 1.0]).unwrap();
        let h = 0.5f64.sqrt();
        assert!((f.matrix()[(0, 0)] - h).abs() < 1e-15);
        assert!((f.matrix()[(1, 0)] - h).abs() < 1e-15);
    }

    #[test]
    fn orthonormalize_removes_scaling() {
        let f = frame(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        assert!((f.matrix() - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn rank_deficient_is_rejected() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert_eq!(orthonormalize(&m), Err(Error::RankDeficient { rank: 1, cols: 2 }));
    }

    #[test]
    fn identical_frames_have_zero_angles() {
        let f = frame(3, 2, &[1.0, 2.0, 0.0, 1.0, 3.0, -1.0]);
        let pa = principal_angles(&f, &f).unwrap();
        assert!(pa.angles.iter().all(|a| a.abs() < 1e-15));
        assert!(max_angle(&f, &f).unwrap().abs() < 1e-15);
    }

    #[test]
    fn orthogonal_lines() {
        let p = Frame::coordinate(2, &[0]).unwrap();
        let q = Frame::coordinate(2, &[1]).unwrap();
        let pa = principal_angles(&p, &q).unwrap();
        assert_eq!(pa.angles, vec![FRAC_PI_2], "{pa:?}");
        assert_eq!(grassmann_distance(&p, &q).unwrap(), 1.0);
    }

    #[test]
    fn planes_in_r3() {
        let p = Frame::coordinate(3, &[0, 1]).unwrap();
        let h = 0.5f64.sqrt();
        let q = frame(3, 2, &[1.0, 0.0, 0.0, h, 0.0, h]);
        let pa = principal_angles(&p, &q).unwrap();
        assert!(pa.angles[0].abs() < 1e-15);
        assert!((pa.angles[1] - FRAC_PI_4).abs() < 1e-15);
        assert!((max_angle(&p, &q).unwrap() - FRAC_PI_4).abs() < 1e-15);
        for (j, (v, w)) in pa.pairs.iter().enumerate() {
            let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
            assert!((dot - pa.angles[j].cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_line() {
        let p = Frame::line(&[1.0, 0.0]).unwrap();
        let q = Frame::line(&[1.0, 1.0]).unwrap();
        assert!((max_angle(&p, &q).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert!((grassmann_distance(&p, &q).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_frames_error() {
        let p = Frame::coordinate(3, &[0]).unwrap();
        let q = Frame::coordinate(3, &[0, 1]).unwrap();
        assert!(matches!(principal_angles(&p, &q), Err(Error::DimensionMismatch(_))));
        assert!(matches!(grassmann_distance(&p, &q), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn chi_folds() {
        assert_eq!(chi(0.0), 0.0);
        assert_eq!(chi(PI), 0.0);
        assert!((chi(3.0 * FRAC_PI_4) - FRAC_PI_4).abs() < 1e-15);
        assert!((chi(-0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn small_angles_keep_relative_accuracy() {
        let t: f64 = 1e-9;
        let p = Frame::line(&[1.0, 0.0]).unwrap();
        let q = Frame::line(&[t.cos(), t.sin()]).unwrap();
        let a = max_angle(&p, &q).unwrap();
        assert!((a - t).abs() < 1e-20);
        let a2 = principal_angles(&p, &q).unwrap().angles[0];
        assert!((a2 - t).abs() < 1e-20);
    }

    #[test]
    fn oracle_guard() {
        let p = Frame::coordinate(4, &[0, 1]).unwrap();
        assert!(minmax_angle_oracle(&p, &p, 200).is_ok());
        let p3 = Frame::coordinate(4, &[0, 1, 2]).unwrap();
        assert!(matches!(minmax_angle_oracle(&p3, &p3, 200), Err(Error::OracleTooLarge { .. })));
    }

    #[test]
    fn oracle_same_frame_is_zero() {
        let p = frame(3, 2, &[1.0, 0.5, 0.0, 1.0, 2.0, 0.0]);
        assert!(minmax_angle_oracle(&p, &p, 200).unwrap() < 1e-7);
    }

    #[test]
    fn oracle_lines_in_plane() {
        let p = Frame::line(&[1.0, 0.2]).unwrap();
        let q = Frame::line(&[-0.3, 1.0]).unwrap();
        let exact = max_angle(&p, &q).unwrap();
        let brute = minmax_angle_oracle(&p, &q, 10_000).unwrap();
        assert!((exact - brute).abs() < 1e-3);
    }

    #[test]
    fn plane_closed_form_matches_svd() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for d in [2usize, 3, 4, 6] {
            for _ in 0..50 {
                let p = Frame::random(d, 2, &mut rng);
                let q = Frame::random(d, 2, &mut rng);
                let svd = principal_angles(&p, &q).unwrap().max_angle();
                let fast = max_angle_unchecked(p.matrix(), q.matrix());
                assert!((svd - fast).abs() < 1e-12, "{svd} vs {fast}");
            }
        }
        let p = Frame::coordinate(3, &[0, 1]).unwrap();
        let q = Frame::coordinate(3, &[0, 2]).unwrap();
        assert_eq!(max_angle_unchecked(p.matrix(), q.matrix()), FRAC_PI_2);
    }
}
