//! Matrix sequences `(A_n)` and the built-in examples.

use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RANK_TOL;

type Producer = Arc<dyn Fn(usize, &mut DMatrix<f64>) + Send + Sync>;

/// An initial subspace given at time `anchor` rather than time 0: the
/// candidate is `V = Φ(anchor, 0)⁻¹ W`. Lets the search represent subspaces
/// whose time-0 representative underflows.
#[derive(Debug, Clone)]
pub struct AnchoredSeed {
    pub anchor: usize,
    /// Column-major `d × s` basis of `W`.
    pub basis: DMatrix<f64>,
    pub label: String,
}

/// Extra knowledge a sequence carries for the estimator.
#[derive(Debug, Clone, Default)]
pub struct SequenceHints {
    /// Set for autonomous sequences.
    pub constant: Option<DMatrix<f64>>,
    /// Seeds known to witness the inner values; never used for outer values.
    pub inner_seeds: Vec<AnchoredSeed>,
    /// Start times worth probing for the uniform upper inner value.
    pub restart_anchors: Vec<usize>,
    /// Ladder and `k` window matched to the construction of the sequence.
    pub ladder: Option<Vec<usize>>,
    pub k_window: Option<usize>,
}

/// `n ↦ A_n`, produced lazily.
#[derive(Clone)]
pub struct MatrixSequence {
    dim: usize,
    label: String,
    producer: Producer,
    /// Every matrix the producer can return was checked up front.
    prevalidated: bool,
    hints: SequenceHints,
}

impl std::fmt::Debug for MatrixSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MatrixSequence").field("dim", &self.dim).field("label", &self.label).finish()
    }
}

/// `σ_min > 1e−12 σ_max`.
pub fn passes_invertibility_guard(m: &DMatrix<f64>) -> bool {
    if m.iter().any(|x| !x.is_finite()) {
        return false;
    }
    if m.nrows() == 2 {
        let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).abs();
        let fro2 = m.norm_squared();
        if fro2 == 0.0 {
            return false;
        }
        // σ₁² + σ₂² = ‖M‖_F², σ₁σ₂ = |det|.
        let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
        let smax2 = 0.5 * (fro2 + disc);
        let smin = det / smax2.sqrt();
        return smin > RANK_TOL * smax2.sqrt();
    }
    let sv = m.clone().singular_values();
    sv.min() > RANK_TOL * sv.max()
}

pub fn rotation_matrix(phi: f64) -> DMatrix<f64> {
    let (s, c) = phi.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

impl MatrixSequence {
    /// A sequence from an arbitrary producer; every matrix is checked when used.
    pub fn from_fn<F>(dim: usize, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(usize) -> DMatrix<f64> + Send + Sync + 'static,
    {
        MatrixSequence {
            dim,
            label: label.into(),
            producer: Arc::new(move |n, out: &mut DMatrix<f64>| out.copy_from(&f(n))),
            prevalidated: false,
            hints: SequenceHints::default(),
        }
    }

    fn from_producer(dim: usize, label: String, producer: Producer, hints: SequenceHints) -> Self {
        MatrixSequence { dim, label, producer, prevalidated: true, hints }
    }

    /// `A_n = A` for all `n`.
    pub fn constant(a: DMatrix<f64>) -> Result<Self> {
        check_square(&a)?;
        if !passes_invertibility_guard(&a) {
            return Err(Error::SequenceSingular(0));
        }
        let d = a.nrows();
        let hints = SequenceHints { constant: Some(a.clone()), ..Default::default() };
        let m = a.clone();
        Ok(Self::from_producer(d, "constant".into(), Arc::new(move |_, out: &mut DMatrix<f64>| out.copy_from(&m)), hints))
    }

    /// The rotation `T_φ` at every step.
    pub fn rotation(phi: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(Error::ParamRange(format!("phi = {phi}")));
        }
        let mut s = Self::constant(rotation_matrix(phi))?;
        s.label = format!("rotation({phi})");
        Ok(s)
    }

    /// Cycles through a finite list: `A_n = list[n mod len]`.
    pub fn from_list(list: Vec<DMatrix<f64>>, label: impl Into<String>) -> Result<Self> {
        let first = list.first().ok_or_else(|| Error::ParamRange("empty matrix list".into()))?;
        let d = first.nrows();
        for (i, m) in list.iter().enumerate() {
            check_square(m)?;
            if m.nrows() != d {
                return Err(Error::DimensionMismatch(format!("matrix {i} is {}x{}, expected {d}x{d}", m.nrows(), m.ncols())));
            }
            if !passes_invertibility_guard(m) {
                return Err(Error::SequenceSingular(i));
            }
        }
        let list = Arc::new(list);
        let producer: Producer = Arc::new(move |n, out: &mut DMatrix<f64>| out.copy_from(&list[n % list.len()]));
        Ok(Self::from_producer(d, label.into(), producer, SequenceHints::default()))
    }

    /// Rotations by `φ₀` and `φ₁`: `A₀ = T_{φ₀}`, and for `n ≥ 1` the angle is
    /// `φ₀` on `[2^{2ℓ−1}, 2^{2ℓ} − 1]` and `φ₁` on `[2^{2ℓ}, 2^{2ℓ+1} − 1]`.
    pub fn example1(phi0: f64, phi1: f64) -> Result<Self> {
        if !(0.0 <= phi0 && phi0 < phi1 && phi1 <= FRAC_PI_2) {
            return Err(Error::ParamRange(format!("need 0 <= phi0 < phi1 <= pi/2, got ({phi0}, {phi1})")));
        }
        let r0 = rotation_matrix(phi0);
        let r1 = rotation_matrix(phi1);
        let producer: Producer = Arc::new(move |n, out: &mut DMatrix<f64>| {
            out.copy_from(if example1_uses_phi1(n) { &r1 } else { &r0 })
        });
        let hints = SequenceHints {
            ladder: Some((10..=14).map(|k| 1usize << k).collect()),
            k_window: Some(1 << 15),
            restart_anchors: (1..=15).map(|k| 1usize << k).collect(),
            ..Default::default()
        };
        Ok(Self::from_producer(2, format!("example1({phi0},{phi1})"), producer, hints))
    }

    /// `R = diag(−1, 1)` on `[2·2^ℓ − 4, 3·2^ℓ − 5]` (`ℓ ≥ 1`), `C = diag(1, ½)` elsewhere.
    pub fn example2() -> Self {
        let r = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        let producer: Producer =
            Arc::new(move |n, out: &mut DMatrix<f64>| out.copy_from(if example2_is_r(n) { &r } else { &c }));
        let mut ladder = Vec::new();
        for l in 8..=13u32 {
            ladder.push(2 * (1usize << l) - 4);
            ladder.push(3 * (1usize << l) - 4);
        }
        let k_window = 2 * (1usize << 14) - 4;
        let diag = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let inner_seeds = (1..=14u32)
            .map(|l| AnchoredSeed {
                anchor: 2 * (1usize << l) - 4,
                basis: diag.clone(),
                label: format!("witness l={l}"),
            })
            .collect();
        let hints = SequenceHints {
            ladder: Some(ladder),
            k_window: Some(k_window),
            restart_anchors: (1..=14u32).map(|l| 2 * (1usize << l) - 4).collect(),
            inner_seeds,
            ..Default::default()
        };
        Self::from_producer(2, "example2".into(), producer, hints)
    }

    /// Variational sequence `A_n = DF(ξ_n)` of the Hénon map
    /// `F(x, y) = (1 + y − a x², b x)` along an orbit started at the origin,
    /// after discarding `transient` steps.
    pub fn henon(a: f64, b: f64, transient: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || b == 0.0 {
            return Err(Error::ParamRange(format!("henon needs finite a and nonzero b, got ({a}, {b})")));
        }
        let mut p = (0.0f64, 0.0f64);
        for _ in 0..transient {
            p = (1.0 + p.1 - a * p.0 * p.0, b * p.0);
        }
        if !(p.0.is_finite() && p.1.is_finite()) || p.0.abs() > 1e6 {
            return Err(Error::ParamRange(format!("henon orbit for ({a}, {b}) escapes to infinity")));
        }
        let cache = Arc::new(Mutex::new(HenonOrbit { xs: vec![p.0], last: p, a, b }));
        let producer: Producer = Arc::new(move |n, out: &mut DMatrix<f64>| {
            let x = cache.lock().expect("henon cache poisoned").x(n);
            out[(0, 0)] = -2.0 * a * x;
            out[(0, 1)] = 1.0;
            out[(1, 0)] = b;
            out[(1, 1)] = 0.0;
        });
        let mut s = Self::from_producer(2, format!("henon({a},{b})"), producer, SequenceHints::default());
        // |det DF| = |b| > 0 but the orbit could still diverge; keep the guard.
        s.prevalidated = false;
        Ok(s)
    }

    /// `n ↦ A_{n+η}`; hints are dropped except for constant sequences.
    pub fn shifted(&self, eta: usize) -> Self {
        let inner = self.producer.clone();
        MatrixSequence {
            dim: self.dim,
            label: format!("{}[+{eta}]", self.label),
            producer: Arc::new(move |n, out: &mut DMatrix<f64>| inner(n + eta, out)),
            prevalidated: self.prevalidated,
            hints: SequenceHints { constant: self.hints.constant.clone(), ..Default::default() },
        }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn hints(&self) -> &SequenceHints {
        &self.hints
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Writes `A_n` into `out` (which must be `d × d`), applying the guard.
    pub fn fill(&self, n: usize, out: &mut DMatrix<f64>) -> Result<()> {
        (self.producer)(n, out);
        if !self.prevalidated && !passes_invertibility_guard(out) {
            return Err(Error::SequenceSingular(n));
        }
        Ok(())
    }

    pub fn matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        self.fill(n, &mut m)?;
        Ok(m)
    }
}

struct HenonOrbit {
    xs: Vec<f64>,
    last: (f64, f64),
    a: f64,
    b: f64,
}

impl HenonOrbit {
    fn x(&mut self, n: usize) -> f64 {
        while self.xs.len() <= n {
            let p = self.last;
            self.last = (1.0 + p.1 - self.a * p.0 * p.0, self.b * p.0);
            self.xs.push(self.last.0);
        }
        self.xs[n]
    }
}

fn check_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    Ok(())
}

/// Whether step `n` of the first example uses the larger angle.
pub fn example1_uses_phi1(n: usize) -> bool {
    if n == 0 {
        return false;
    }
    // n ∈ [2^k, 2^{k+1} − 1] with k even ↦ φ₁.
    let k = usize::BITS - 1 - n.leading_zeros();
    k % 2 == 0
}

/// Whether step `n` of the second example is the reflection `R`.
pub fn example2_is_r(n: usize) -> bool {
    // R on [2^{l+1} − 4, 3·2^l − 5]: with m = n + 4, 2^{l+1} ≤ m < 3·2^l.
    let m = n + 4;
    let top = usize::BITS - 1 - m.leading_zeros();
    let l = top - 1;
    top >= 2 && m < 3 * (1usize << l)
}

/// Names accepted by [`builtin_sequence`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BuiltinKind {
    Constant { matrix: Vec<Vec<f64>> },
    Rotation { phi: f64 },
    Example1 { phi0: f64, phi1: f64 },
    Example2,
    Henon { a: f64, b: f64, transient: usize },
    FromFile { path: PathBuf },
}

pub fn builtin_sequence(kind: &BuiltinKind) -> Result<MatrixSequence> {
    match kind {
        BuiltinKind::Constant { matrix } => {
            let rows = matrix.len();
            let cols = matrix.first().map_or(0, |r| r.len());
            if matrix.iter().any(|r| r.len() != cols) {
                return Err(Error::DimensionMismatch("ragged matrix rows".into()));
            }
            let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
            MatrixSequence::constant(DMatrix::from_row_slice(rows, cols, &flat))
        }
        BuiltinKind::Rotation { phi } => MatrixSequence::rotation(*phi),
        BuiltinKind::Example1 { phi0, phi1 } => MatrixSequence::example1(*phi0, *phi1),
        BuiltinKind::Example2 => Ok(MatrixSequence::example2()),
        BuiltinKind::Henon { a, b, transient } => MatrixSequence::henon(*a, *b, *transient),
        BuiltinKind::FromFile { path } => {
            let list = crate::io::read_matrix_list(path)?;
            if list.len() == 1 {
                let mut s = MatrixSequence::constant(list.into_iter().next().expect("one matrix"))?;
                s.label = path.display().to_string();
                Ok(s)
            } else {
                MatrixSequence::from_list(list, path.display().to_string())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_pattern() {
        let pat: Vec<bool> = (0..9).map(example1_uses_phi1).collect();
        assert_eq!(pat, vec![false, true, false, false, true, true, true, true, false]);
        assert!(!example1_uses_phi1(15) && example1_uses_phi1(16) && example1_uses_phi1(31) && !example1_uses_phi1(32));
    }

    #[test]
    fn example2_pattern() {
        let pat: String = (0..13).map(|n| if example2_is_r(n) { 'R' } else { 'C' }).collect();
        assert_eq!(pat, "RRCCRRRRCCCCR");
        assert!(example2_is_r(19) && !example2_is_r(20) && !example2_is_r(27) && example2_is_r(28));
    }

    #[test]
    fn example_matrices() {
        let s = MatrixSequence::example1(0.3, 1.2).unwrap();
        assert_eq!(s.matrix(1).unwrap(), rotation_matrix(1.2));
        assert_eq!(s.matrix(2).unwrap(), rotation_matrix(0.3));
        let s = MatrixSequence::example2();
        assert_eq!(s.matrix(2).unwrap(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]));
        assert!(MatrixSequence::example1(1.2, 0.3).is_err());
    }

    #[test]
    fn constant_and_shift() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 3.0]);
        let s = MatrixSequence::constant(a.clone()).unwrap();
        assert_eq!(s.matrix(17).unwrap(), a);
        let e = MatrixSequence::example2().shifted(2);
        assert_eq!(e.matrix(0).unwrap(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]));
    }

    #[test]
    fn guard_rejects_singular() {
        assert!(MatrixSequence::constant(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0])).is_err());
        let s = MatrixSequence::from_fn(2, "bad", |n| DMatrix::from_diagonal_element(2, 2, if n == 3 { 0.0 } else { 1.0 }));
        assert!(s.matrix(2).is_ok());
        assert_eq!(s.matrix(3).unwrap_err(), Error::SequenceSingular(3));
        let big = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1e-13, 0.0, 0.0, 0.0, 1.0]);
        assert!(!passes_invertibility_guard(&big));
    }

    #[test]
    fn henon_jacobian() {
        let s = MatrixSequence::henon(1.4, 0.3, 1000).unwrap();
        let m = s.matrix(5).unwrap();
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(1, 0)], 0.3);
        assert!(m[(0, 0)].abs() < 2.0 * 1.4 * 1.5);
    }
}
