//! Shift check for outer maximizers: `A_η V̂(η)` should maximize the
//! problem started one step later.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::estimate::{estimate_angular_values, EstimatorConfig, SearchStrategy};
use super::orbit::{forward_angles, propagate_frame};
use super::sequence::MatrixSequence;
use crate::error::{Error, Result};
use crate::geometry::{max_angle, Frame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftStep {
    pub eta: usize,
    /// Outer upper value of the problem started at `η`.
    pub value: f64,
    /// `max` of the problem at `η + 1` minus the value of `A_η V̂(η)` in it.
    pub value_gap: f64,
    /// `∠(A_η V̂(η), V̂(η+1))` for the two independently found maximizers.
    pub argmax_angle: f64,
    /// Zero when `A_η V̂(η)` is itself a near-maximizer at `η + 1`, otherwise
    /// `argmax_angle`.
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub steps: Vec<ShiftStep>,
    pub max_discrepancy: f64,
    /// Candidates within this of the maximum count as maximizers.
    pub value_tol: f64,
    /// Spacing of the search set.
    pub resolution: f64,
}

fn tail_max_average(seq: &MatrixSequence, frame: &Frame, cfg: &EstimatorConfig) -> Result<f64> {
    let n_max = *cfg.n_ladder.last().expect("validated ladder");
    let b = forward_angles(seq, 0, frame, n_max)?;
    let mut acc = 0.0;
    let mut sums = Vec::with_capacity(n_max + 1);
    sums.push(0.0);
    for x in b {
        acc += x;
        sums.push(acc);
    }
    Ok(cfg.n_ladder[cfg.tail()].iter().map(|&n| sums[n] / n as f64).fold(f64::NEG_INFINITY, f64::max))
}

/// Outer-upper maximizers of `n ↦ A_{n+η}` for `η = 0..=eta_max`, compared along the shift.
pub fn shift_maximizer_check(seq: &MatrixSequence, s: usize, eta_max: usize, cfg: &EstimatorConfig) -> Result<ShiftReport> {
    let mut cfg = cfg.clone();
    cfg.s = s;
    cfg.use_hints = false;
    let d = seq.dimension();
    cfg.validate(d)?;
    let n_tail = cfg.n_ladder[cfg.tail()][0];
    // A one-step shift changes a_{1,n}/n by at most π/(2n) at each end.
    let value_tol = PI / n_tail as f64;
    let resolution = match cfg.search {
        SearchStrategy::AngleGrid(m) => PI / m as f64,
        SearchStrategy::Auto if (s, d) == (1, 2) => PI / 720.0,
        SearchStrategy::RandomFrames(m) => random_resolution(m, s, d),
        SearchStrategy::Auto => random_resolution(256, s, d),
    };

    let mut problems = Vec::with_capacity(eta_max + 1);
    for eta in 0..=eta_max {
        let shifted = seq.shifted(eta);
        let est = estimate_angular_values(&shifted, &cfg)?;
        problems.push((shifted, est));
    }

    let mut steps = Vec::new();
    for eta in 0..eta_max {
        let (_, est) = &problems[eta];
        let (next_seq, next) = &problems[eta + 1];
        let v_hat = frame_of(&est.outer_upper.argmax.basis, d, s)?;
        let pushed = propagate_frame(seq, eta, &v_hat, 1)?;
        let next_hat = frame_of(&next.outer_upper.argmax.basis, d, s)?;
        let pushed_value = tail_max_average(next_seq, &pushed, &cfg)?;
        let best = next.outer_upper.value.max(pushed_value);
        let value_gap = (next.outer_upper.value - pushed_value).max(0.0);
        let argmax_angle = max_angle(&pushed, &next_hat)?;
        let discrepancy = if pushed_value >= best - value_tol { 0.0 } else { argmax_angle };
        steps.push(ShiftStep { eta, value: est.outer_upper.value, value_gap, argmax_angle, discrepancy });
    }
    let max_discrepancy = steps.iter().map(|s| s.discrepancy).fold(0.0, f64::max);
    Ok(ShiftReport { steps, max_discrepancy, value_tol, resolution })
}

/// Typical spacing of `m` random points on `G(s, d)`, of dimension `s(d − s)`.
fn random_resolution(m: usize, s: usize, d: usize) -> f64 {
    let dim = (s * (d - s)).max(1) as f64;
    (std::f64::consts::FRAC_PI_2 * (m as f64).powf(-1.0 / dim)).min(std::f64::consts::FRAC_PI_2)
}

fn frame_of(basis: &[f64], d: usize, s: usize) -> Result<Frame> {
    if basis.len() != d * s {
        return Err(Error::DimensionMismatch(format!("maximizer basis has {} entries, expected {}", basis.len(), d * s)));
    }
    Frame::new(&DMatrix::from_column_slice(d, s, basis))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_has_no_discrepancy() {
        let seq = MatrixSequence::rotation(0.9).unwrap();
        let cfg = EstimatorConfig { n_ladder: vec![50, 100], k_window: 5, ..Default::default() };
        let rep = shift_maximizer_check(&seq, 1, 3, &cfg).unwrap();
        assert_eq!(rep.steps.len(), 3);
        assert!(rep.max_discrepancy < 1e-12);
    }
}
