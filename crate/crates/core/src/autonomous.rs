//! First angular value `θ₁(A)` of a single invertible matrix.
//!
//! `A` is split into invariant subspaces by eigenvalue modulus and
//! `θ₁(A) = max_i θ₁(B_i)`, unless `A` has real eigenvalues `λ` and `−λ`, in
//! which case `θ₁(A) = π/2`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{check_eigencond, modulus_blocks, normal_form_2x2, BlockKind, NormalForm2D, DEFAULT_TOL_MOD};
use crate::theta2d::{theta1_normal, Theta2DReport, ThetaCase, ThetaOptions};
use crate::trajectory::{trajectory_max, SearchStrategy};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutoOptions {
    /// Modulus grouping tolerance, relative to the spectral radius.
    pub tol_mod: f64,
    pub theta: ThetaOptions,
    /// Estimate blocks without a formula by trajectory optimization instead of failing.
    pub fallback: bool,
    pub fallback_n: usize,
    pub fallback_frames: usize,
    pub seed: u64,
}

impl Default for AutoOptions {
    fn default() -> Self {
        AutoOptions {
            tol_mod: DEFAULT_TOL_MOD,
            theta: ThetaOptions::default(),
            fallback: true,
            fallback_n: 10_000,
            fallback_frames: 720,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockMethod {
    /// Closed form: the 2×2 four-case formula or the orthogonal-block formula.
    Formula,
    RealSpectrumZero,
    /// Direct maximization of the trajectory average; approximate.
    TrajectoryFallback,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockRecord {
    pub modulus: f64,
    pub dim: usize,
    pub kind: BlockKind,
    pub normal_form: Option<NormalForm2D>,
    pub skew: Option<f64>,
    pub case: Option<ThetaCase>,
    pub theta1_block: f64,
    pub method: BlockMethod,
    pub detail: Option<Theta2DReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutoThetaReport {
    pub dimension: usize,
    pub spectral_radius: f64,
    pub blocks: Vec<BlockRecord>,
    pub opposite_reals: bool,
    pub eigencond_ok: bool,
    pub theta1: f64,
    /// Some block value came from the trajectory fallback.
    pub approximate: bool,
    pub warnings: Vec<String>,
}

impl AutoThetaReport {
    /// Block values in ascending order.
    pub fn sorted_block_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.blocks.iter().map(|b| b.theta1_block).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn count_kind(&self, kind: BlockKind) -> usize {
        self.blocks.iter().filter(|b| b.kind == kind).count()
    }
}

/// `θ₁` of an orthogonal matrix: `max_v ∠(v, Cv)`. With `c_k` the real parts
/// of the eigenvalues, `cos ∠(v, Cv)` ranges over the convex hull of the
/// `|c_k|`-weighted sums, so the value is `π/2` when the `c_k` change sign
/// (or one vanishes) and `arccos(min |c_k|)` otherwise.
pub fn orthogonal_theta1(c: &DMatrix<f64>) -> Result<f64> {
    let eig = crate::spectral::eigen(c)?;
    let re: Vec<f64> = eig.values.iter().map(|z| z.re).collect();
    let tol = 1e-12;
    let has_pos = re.iter().any(|&x| x > tol);
    let has_neg = re.iter().any(|&x| x < -tol);
    let has_zero = re.iter().any(|&x| x.abs() <= tol);
    if (has_pos && has_neg) || has_zero {
        return Ok(FRAC_PI_2);
    }
    let cmin = re.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min).min(1.0);
    Ok(cmin.acos())
}

fn is_orthogonal(c: &DMatrix<f64>, tol: f64) -> bool {
    let k = c.nrows();
    (c.transpose() * c - DMatrix::identity(k, k)).amax() <= tol
}

/// The first angular value of `A` and a per-block account of how it was obtained.
pub fn theta1_autonomous(a: &DMatrix<f64>, opts: &AutoOptions) -> Result<AutoThetaReport> {
    let dec = modulus_blocks(a, opts.tol_mod)?;
    let cond = check_eigencond(&dec);
    let mut warnings = cond.violations.clone();
    let records: Vec<Result<BlockRecord>> = dec
        .blocks
        .par_iter()
        .map(|blk| {
            let dim = blk.dim();
            let mut rec = BlockRecord {
                modulus: blk.modulus,
                dim,
                kind: blk.kind,
                normal_form: None,
                skew: None,
                case: None,
                theta1_block: 0.0,
                method: BlockMethod::RealSpectrumZero,
                detail: None,
            };
            match blk.kind {
                BlockKind::RealSingle => {}
                BlockKind::ComplexPair => {
                    let nf = normal_form_2x2(&blk.b)?;
                    let rep = theta1_normal(nf.rho, nf.phi, &opts.theta)?;
                    rec.skew = Some(rep.skew);
                    rec.case = Some(rep.case);
                    rec.theta1_block = rep.theta1;
                    rec.method = BlockMethod::Formula;
                    rec.normal_form = Some(nf);
                    rec.detail = Some(rep);
                }
                BlockKind::Mixed => {
                    let c = &blk.b / blk.modulus;
                    if is_orthogonal(&c, 1e-8) {
                        rec.theta1_block = orthogonal_theta1(&c)?;
                        rec.method = BlockMethod::Formula;
                    } else if opts.fallback {
                        let search = if dim == 2 {
                            SearchStrategy::AngleGrid(opts.fallback_frames)
                        } else {
                            SearchStrategy::RandomFrames(opts.fallback_frames)
                        };
                        let t = trajectory_max(&blk.b, 1, opts.fallback_n, search, opts.seed)?;
                        rec.theta1_block = t.value;
                        rec.method = BlockMethod::TrajectoryFallback;
                    } else {
                        return Err(Error::EigencondViolated(format!(
                            "block of modulus {} (dimension {dim}) has no closed form",
                            blk.modulus
                        )));
                    }
                }
            }
            Ok(rec)
        })
        .collect();
    let blocks: Vec<BlockRecord> = records.into_iter().collect::<Result<_>>()?;

    let approximate = blocks.iter().any(|b| b.method == BlockMethod::TrajectoryFallback);
    if approximate {
        warnings.push("trajectory fallback used for at least one block; value is an estimate".into());
    }
    let theta1 = if dec.opposite_reals {
        warnings.push("real eigenvalues of opposite sign: theta1 = pi/2".into());
        FRAC_PI_2
    } else {
        blocks.iter().map(|b| b.theta1_block).fold(0.0, f64::max)
    };
    for b in &blocks {
        if let Some(note) = b.detail.as_ref().and_then(|r| r.note.clone()) {
            warnings.push(format!("block of modulus {}: {note}", b.modulus));
        }
    }
    Ok(AutoThetaReport {
        dimension: a.nrows(),
        spectral_radius: dec.spectral_radius,
        blocks,
        opposite_reals: dec.opposite_reals,
        eigencond_ok: dec.eigencond_ok,
        theta1,
        approximate,
        warnings,
    })
}
