//! Propagation of subspaces along a sequence and the angle log `b_j`.

use nalgebra::DMatrix;

use super::sequence::{AnchoredSeed, MatrixSequence};
use crate::error::{Error, Result};
use crate::geometry::{line_angle, max_angle_unchecked, norm, orthonormalize, qr_positive, Frame};

/// A frame carried forward one matrix at a time, with the angles it swept.
#[derive(Debug, Clone)]
pub struct SubspaceOrbit {
    current: Frame,
    step_count: usize,
    angle_log: Vec<f64>,
}

impl SubspaceOrbit {
    pub fn new(v0: Frame) -> Self {
        SubspaceOrbit { current: v0, step_count: 0, angle_log: Vec::new() }
    }

    /// Applies `a`, re-orthonormalizes and logs `∠(V, aV)`.
    pub fn step(&mut self, a: &DMatrix<f64>) -> Result<f64> {
        if a.nrows() != self.current.dim() || a.ncols() != self.current.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix applied to a frame in R^{}",
                a.nrows(),
                a.ncols(),
                self.current.dim()
            )));
        }
        let mut q = self.current.matrix().clone();
        let angle = forward_step(a, &mut q);
        self.current = Frame::from_orthonormal(q);
        self.step_count += 1;
        self.angle_log.push(angle);
        Ok(angle)
    }

    pub fn current(&self) -> &Frame {
        &self.current
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn angle_log(&self) -> &[f64] {
        &self.angle_log
    }
}

/// `q ← orth(a q)`, returning the largest principal angle between the old and new span.
fn forward_step(a: &DMatrix<f64>, q: &mut DMatrix<f64>) -> f64 {
    let w = a * &*q;
    replace_with(q, w)
}

fn replace_with(q: &mut DMatrix<f64>, w: DMatrix<f64>) -> f64 {
    if q.ncols() == 1 {
        let angle = line_angle(q.as_slice(), w.as_slice());
        let n = norm(w.as_slice());
        q.copy_from(&w);
        q.unscale_mut(n);
        angle
    } else {
        let next = qr_positive(w);
        let angle = max_angle_unchecked(q, &next);
        *q = next;
        angle
    }
}

/// `q ← orth(a⁻¹ q)`.
fn backward_step(a: &DMatrix<f64>, q: &mut DMatrix<f64>, step: usize) -> Result<f64> {
    let w = if a.nrows() == 2 {
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        if det == 0.0 {
            return Err(Error::SequenceSingular(step));
        }
        // Scaling by det does not change the span.
        let adj = DMatrix::from_row_slice(2, 2, &[a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)]]);
        adj * &*q * det.signum()
    } else {
        a.clone().lu().solve(q).ok_or(Error::SequenceSingular(step))?
    };
    Ok(replace_with(q, w))
}

fn check_frame(seq: &MatrixSequence, q: &DMatrix<f64>) -> Result<()> {
    if q.nrows() != seq.dimension() {
        return Err(Error::DimensionMismatch(format!(
            "frame lives in R^{}, sequence in R^{}",
            q.nrows(),
            seq.dimension()
        )));
    }
    Ok(())
}

/// Angles `b_{start+1}, …, b_{start+n}` of the orbit through `frame` at time `start`:
/// `b_j = ∠(Φ(j−1, start)V, Φ(j, start)V)`.
pub fn forward_angles(seq: &MatrixSequence, start: usize, frame: &Frame, n: usize) -> Result<Vec<f64>> {
    let mut q = frame.matrix().clone();
    check_frame(seq, &q)?;
    let d = seq.dimension();
    let mut a = DMatrix::zeros(d, d);
    let mut out = Vec::with_capacity(n);
    if q.ncols() == 1 {
        // Allocation-free path for lines.
        let mut v = q.as_slice().to_vec();
        let mut w = vec![0.0; d];
        for j in start..start + n {
            seq.fill(j, &mut a)?;
            for (i, wi) in w.iter_mut().enumerate() {
                *wi = (0..d).map(|k| a[(i, k)] * v[k]).sum();
            }
            out.push(line_angle(&v, &w));
            let nw = norm(&w);
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / nw;
            }
        }
        return Ok(out);
    }
    for j in start..start + n {
        seq.fill(j, &mut a)?;
        out.push(forward_step(&a, &mut q));
    }
    Ok(out)
}

/// The `n` summands of `a_{1,n}(V₀)`.
pub fn orbit_angles(seq: &MatrixSequence, v0: &Frame, n: usize) -> Result<Vec<f64>> {
    forward_angles(seq, 0, v0, n)
}

/// `Φ(start + steps, start) V`.
pub fn propagate_frame(seq: &MatrixSequence, start: usize, frame: &Frame, steps: usize) -> Result<Frame> {
    let mut q = frame.matrix().clone();
    check_frame(seq, &q)?;
    let d = seq.dimension();
    let mut a = DMatrix::zeros(d, d);
    for j in start..start + steps {
        seq.fill(j, &mut a)?;
        forward_step(&a, &mut q);
    }
    Ok(Frame::from_orthonormal(q))
}

/// First `n` angles from time 0 of the subspace that equals `span(seed.basis)`
/// at time `seed.anchor`. The part before the anchor is obtained by
/// propagating backwards, so the time-0 representative is never formed
/// explicitly when it would underflow.
pub fn anchored_orbit_angles(seq: &MatrixSequence, seed: &AnchoredSeed, n: usize) -> Result<Vec<f64>> {
    let w = orthonormalize(&seed.basis)?;
    let d = seq.dimension();
    check_frame(seq, w.matrix())?;
    let mut a = DMatrix::zeros(d, d);
    let mut out = vec![0.0; n];
    let mut q = w.matrix().clone();
    // Frames at times anchor−1, …, 0 give b_anchor, …, b_1.
    for j in (0..seed.anchor).rev() {
        seq.fill(j, &mut a)?;
        let angle = backward_step(&a, &mut q, j)?;
        if j < n {
            out[j] = angle;
        }
    }
    if seed.anchor < n {
        let tail = forward_angles(seq, seed.anchor, &w, n - seed.anchor)?;
        out[seed.anchor..].copy_from_slice(&tail);
    }
    Ok(out)
}
