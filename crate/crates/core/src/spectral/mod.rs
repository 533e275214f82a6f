//! Eigenvalues, skewness, the 2×2 normal form and the decomposition of
//! `R^d` into invariant subspaces grouped by eigenvalue modulus.

mod decouple;
pub mod schur;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{orthonormalize, Frame};

pub use schur::{real_schur, RealSchur};

/// Default relative tolerance for grouping eigenvalue moduli (times `r(A)`).
pub const DEFAULT_TOL_MOD: f64 = 1e-8;

fn require_square(a: &DMatrix<f64>) -> Result<usize> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::ParamRange("matrix has non-finite entries".into()));
    }
    Ok(a.nrows())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenSet {
    pub values: Vec<Complex64>,
    /// Largest relative eigenpair residual `‖(A − λI)x‖ / ‖x‖`.
    pub residual: f64,
}

fn eigen_from_schur(a: &DMatrix<f64>, s: &RealSchur) -> EigenSet {
    let n = a.nrows();
    let values: Vec<Complex64> = (0..n).map(|i| Complex64::new(s.re[i], s.im[i])).collect();
    let vecs = schur::eigenvectors(s);
    let mut residual: f64 = 0.0;
    let mut j = 0;
    while j < n {
        if s.im[j] > 0.0 && j + 1 < n {
            let u = vecs.column(j).clone_owned();
            let v = vecs.column(j + 1).clone_owned();
            let (re, im) = (s.re[j], s.im[j]);
            let ru = a * &u - (&u * re - &v * im);
            let rv = a * &v - (&u * im + &v * re);
            let num = (ru.norm_squared() + rv.norm_squared()).sqrt();
            let den = (u.norm_squared() + v.norm_squared()).sqrt();
            residual = residual.max(num / den);
            j += 2;
        } else {
            let x = vecs.column(j).clone_owned();
            let r = a * &x - &x * s.re[j];
            residual = residual.max(r.norm() / x.norm());
            j += 1;
        }
    }
    EigenSet { values, residual }
}

/// All eigenvalues with multiplicity; complex pairs appear adjacent.
pub fn eigen(a: &DMatrix<f64>) -> Result<EigenSet> {
    require_square(a)?;
    let s = real_schur(a)?;
    Ok(eigen_from_schur(a, &s))
}

pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    let e = eigen(a)?;
    Ok(e.values.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `‖A − Aᵀ‖₂ / (2 r(A))`.
pub fn skewness(a: &DMatrix<f64>) -> Result<f64> {
    require_square(a)?;
    let r = spectral_radius(a)?;
    if r == 0.0 {
        return Err(Error::ZeroSpectralRadius);
    }
    let k = a - a.transpose();
    Ok(k.singular_values().max() / (2.0 * r))
}

/// The normal form `A(ρ, φ) = [[cos φ, −sin φ/ρ], [ρ sin φ, cos φ]]`.
pub fn make_normal_matrix(rho: f64, phi: f64) -> Result<DMatrix<f64>> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::ParamRange(format!("rho = {rho} not in (0, 1]")));
    }
    if !(phi > 0.0 && phi < PI) {
        return Err(Error::ParamRange(format!("phi = {phi} not in (0, pi)")));
    }
    Ok(normal_matrix_unchecked(rho, phi))
}

pub(crate) fn normal_matrix_unchecked(rho: f64, phi: f64) -> DMatrix<f64> {
    let (s, c) = phi.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s / rho, rho * s, c])
}

/// `B = r · Q · A(ρ, φ) · Qᵀ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalForm2D {
    pub r: f64,
    pub rho: f64,
    pub phi: f64,
    /// Row-major 2×2 orthogonal matrix.
    pub q: [f64; 4],
    pub reconstruction_error: f64,
}

impl NormalForm2D {
    pub fn q_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &self.q)
    }

    pub fn skew(&self) -> f64 {
        0.5 * (self.rho + 1.0 / self.rho) * self.phi.sin().abs()
    }
}

/// Scales `B` to unit determinant and brings it to `A(ρ, φ)` with `ρ ≤ 1`
/// by a rotation that equalizes the diagonal, then reflections/permutations.
pub fn normal_form_2x2(b: &DMatrix<f64>) -> Result<NormalForm2D> {
    if b.shape() != (2, 2) {
        return Err(Error::DimensionMismatch(format!("expected 2x2, got {}x{}", b.nrows(), b.ncols())));
    }
    require_square(b)?;
    let tr = b[(0, 0)] + b[(1, 1)];
    let det = b[(0, 0)] * b[(1, 1)] - b[(0, 1)] * b[(1, 0)];
    let disc = tr * tr - 4.0 * det;
    if !(disc < -1e-12 * b.norm_squared()) {
        return Err(Error::NotComplexPair);
    }
    let r = det.sqrt();
    let c = b / r;
    let (a0, b0, c0, d0) = (c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]);
    let t = 0.5 * (-(a0 - d0)).atan2(b0 + c0);
    let (sn, cs) = t.sin_cos();
    let mut q = DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]);
    let mut m = q.transpose() * &c * &q;
    let reflect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    if m[(1, 0)] < 0.0 {
        q = &q * &reflect;
        m = &reflect * &m * &reflect;
    }
    if m[(1, 0)] > -m[(0, 1)] {
        let p = &swap * &reflect;
        q = &q * &p;
        m = p.transpose() * &m * &p;
    }
    let x = m[(0, 1)];
    let y = m[(1, 0)];
    let mid = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let sin_phi = (-x * y).max(0.0).sqrt();
    let rho = (y / -x).sqrt().min(1.0);
    let phi = sin_phi.atan2(mid);
    let rec = &q * normal_matrix_unchecked(rho, phi) * q.transpose() * r;
    let reconstruction_error = (b - rec).amax();
    Ok(NormalForm2D {
        r,
        rho,
        phi,
        q: [q[(0, 0)], q[(0, 1)], q[(1, 0)], q[(1, 1)]],
        reconstruction_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// Only real eigenvalues, all of one modulus.
    RealSingle,
    /// Exactly one complex-conjugate pair.
    ComplexPair,
    /// Several eigenvalues of (numerically) equal modulus including complex ones.
    Mixed,
}

#[derive(Debug, Clone)]
pub struct ModulusBlock {
    pub q: Frame,
    /// `QᵀAQ`.
    pub b: DMatrix<f64>,
    pub modulus: f64,
    pub kind: BlockKind,
    pub eigenvalues: Vec<Complex64>,
}

impl ModulusBlock {
    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// `max |AQ − QB|`.
    pub fn invariance_residual(&self, a: &DMatrix<f64>) -> f64 {
        (a * self.q.matrix() - self.q.matrix() * &self.b).amax()
    }
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Sorted by descending modulus.
    pub blocks: Vec<ModulusBlock>,
    pub eigencond_ok: bool,
    pub opposite_reals: bool,
    pub eigenvalues: Vec<Complex64>,
    pub spectral_radius: f64,
    /// Absolute grouping tolerance actually used.
    pub tol_mod: f64,
}

/// Invariant subspaces of `A` grouped by eigenvalue modulus, each with an
/// orthonormal basis `Q` and the restricted map `B = QᵀAQ`.
///
/// `tol_mod` is relative to the spectral radius. Moduli closer than that are
/// merged into one group.
pub fn modulus_blocks(a: &DMatrix<f64>, tol_mod: f64) -> Result<SpectralDecomposition> {
    let d = require_square(a)?;
    if !(tol_mod > 0.0) {
        return Err(Error::ParamRange(format!("tol_mod = {tol_mod} must be positive")));
    }
    let s = real_schur(a)?;
    let eig = eigen_from_schur(a, &s);
    let radius = eig.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let min_mod = eig.values.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if !(min_mod > 1e-12 * radius.max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularMatrix { min_modulus: min_mod });
    }
    let tol = tol_mod * radius;

    let sblocks = s.blocks();
    let moduli: Vec<f64> = sblocks
        .iter()
        .map(|&(i, _)| Complex64::new(s.re[i], s.im[i]).norm())
        .collect();
    let mut order: Vec<usize> = (0..sblocks.len()).collect();
    order.sort_by(|&x, &y| moduli[y].total_cmp(&moduli[x]));
    let mut group_of = vec![0usize; sblocks.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (pos, &k) in order.iter().enumerate() {
        if pos == 0 || moduli[order[pos - 1]] - moduli[k] > tol {
            groups.push(Vec::new());
        }
        group_of[k] = groups.len() - 1;
        groups.last_mut().expect("group exists").push(k);
    }

    let y = decouple::decouple(&s.t, &sblocks, &group_of)?;
    let dz = {
        let dmat = DMatrix::from_diagonal(&DVector::from_vec(s.scale.clone()));
        dmat * &s.z * y
    };

    let mut blocks = Vec::with_capacity(groups.len());
    for members in &groups {
        let mut cols = Vec::new();
        let mut evs = Vec::new();
        for &k in members {
            let (start, size) = sblocks[k];
            for c in start..start + size {
                cols.push(c);
                evs.push(Complex64::new(s.re[c], s.im[c]));
            }
        }
        let basis = DMatrix::from_fn(d, cols.len(), |i, j| dz[(i, cols[j])]);
        let q = orthonormalize(&basis)?;
        let b = q.matrix().transpose() * a * q.matrix();
        let modulus = evs.iter().map(|z| z.norm()).sum::<f64>() / evs.len() as f64;
        let n_complex_blocks = members
            .iter()
            .filter(|&&k| sblocks[k].1 == 2 && s.im[sblocks[k].0].abs() > tol)
            .count();
        let kind = if n_complex_blocks == 0 {
            BlockKind::RealSingle
        } else if members.len() == 1 {
            BlockKind::ComplexPair
        } else {
            BlockKind::Mixed
        };
        blocks.push(ModulusBlock { q, b, modulus, kind, eigenvalues: evs });
    }

    let eigencond_ok = blocks.iter().all(|b| b.kind != BlockKind::Mixed);
    let opposite_reals = detect_opposite_reals(&eig.values, radius);
    Ok(SpectralDecomposition {
        blocks,
        eigencond_ok,
        opposite_reals,
        eigenvalues: eig.values,
        spectral_radius: radius,
        tol_mod: tol,
    })
}

/// Whether some real `λ` and `−λ` are both eigenvalues (relative tolerance 1e−8).
pub fn detect_opposite_reals(values: &[Complex64], radius: f64) -> bool {
    let tol = 1e-8 * radius;
    let reals: Vec<f64> = values.iter().filter(|z| z.im.abs() <= tol).map(|z| z.re).collect();
    for i in 0..reals.len() {
        for j in i + 1..reals.len() {
            if (reals[i] + reals[j]).abs() <= tol && reals[i].abs() > tol {
                return true;
            }
        }
    }
    false
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigencondReport {
    pub ok: bool,
    pub violations: Vec<String>,
}

/// Lists every block whose spectrum breaks the requirement that complex
/// eigenvalues be simple and share their modulus with no other eigenvalue.
pub fn check_eigencond(dec: &SpectralDecomposition) -> EigencondReport {
    let mut violations = Vec::new();
    for (i, b) in dec.blocks.iter().enumerate() {
        if b.kind != BlockKind::Mixed {
            continue;
        }
        let mods: Vec<f64> = b.eigenvalues.iter().map(|z| z.norm()).collect();
        let spread = mods.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - mods.iter().cloned().fold(f64::INFINITY, f64::min);
        let evs: Vec<String> = b.eigenvalues.iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect();
        let what = if spread > 0.0 {
            "eigenvalues with moduli closer than tol_mod merged into one group"
        } else {
            "complex eigenvalue shares its modulus with other eigenvalues"
        };
        violations.push(format!("block {i} (modulus {:.6}): {what}: [{}]", b.modulus, evs.join(", ")));
    }
    EigencondReport { ok: violations.is_empty(), violations }
}
