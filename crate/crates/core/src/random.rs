//! Random linear cocycles `A(T^{n−1}ω)⋯A(ω)`: seeded drivers, Birkhoff
//! averages for the outer value and per-path maximization for the inner one.
//!
//! Every draw comes from a ChaCha8 stream selected by `(replication, purpose)`
//! and positioned by the time index, so a path is a pure function of
//! `(seed, kind, replication)` and can be produced lazily in any order.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autonomous::{theta1_autonomous, AutoOptions};
use crate::error::{Error, Result};
use crate::geometry::Frame;
use crate::spectral::BlockKind;
use crate::trajectory::estimate::EstimatorConfig;
use crate::trajectory::sequence::{passes_invertibility_guard, rotation_matrix};
use crate::trajectory::{forward_angles, MatrixSequence};

/// Golden-ratio conjugate, the default torus rotation number.
pub const GOLDEN_ALPHA: f64 = 0.618_033_988_749_894_8;

const PURPOSE_PATH: u64 = 0;
const PURPOSE_OMEGA: u64 = 1;
const PURPOSE_FRAMES: u64 = 2;

/// The matrix family `ω ↦ A(ω)` over the circle `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TorusFamily {
    /// `T_{base + amp·sin(2πω)}`.
    Rotation { base: f64, amp: f64 },
    /// The same matrix for every `ω`.
    Constant { matrix: Vec<Vec<f64>> },
}

impl TorusFamily {
    fn at(&self, omega: f64) -> DMatrix<f64> {
        match self {
            TorusFamily::Rotation { base, amp } => rotation_matrix(base + amp * (2.0 * PI * omega).sin()),
            TorusFamily::Constant { matrix } => rows_to_matrix(matrix).expect("validated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriverKind {
    /// Rotations `T_φ` with `φ` iid uniform on `[lo, hi] ⊂ [0, π/2]`.
    IidAngles { lo: f64, hi: f64 },
    /// Matrices drawn iid from a finite list (row-major rows).
    IidFiniteSet { matrices: Vec<Vec<Vec<f64>>>, probabilities: Vec<f64> },
    /// `ω ↦ ω + α mod 1` with a random initial `ω` per replication.
    TorusRotation {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(flatten)]
        family: TorusFamily,
    },
}

fn default_alpha() -> f64 {
    GOLDEN_ALPHA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocycleDriver {
    #[serde(flatten)]
    pub kind: DriverKind,
    #[serde(default)]
    pub seed: u64,
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if r == 0 || rows.iter().any(|x| x.len() != c) {
        return Err(Error::DimensionMismatch("ragged or empty matrix".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl CocycleDriver {
    pub fn new(kind: DriverKind, seed: u64) -> Result<Self> {
        let d = CocycleDriver { kind, seed };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            DriverKind::IidAngles { lo, hi } => {
                if !(0.0 <= *lo && lo <= hi && *hi <= FRAC_PI_2) {
                    return Err(Error::ParamRange(format!("need 0 <= lo <= hi <= pi/2, got [{lo}, {hi}]")));
                }
            }
            DriverKind::IidFiniteSet { matrices, probabilities } => {
                if matrices.is_empty() || matrices.len() != probabilities.len() {
                    return Err(Error::ParamRange("need one probability per matrix".into()));
                }
                if probabilities.iter().any(|&p| !(p >= 0.0)) || (probabilities.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::ParamRange("probabilities must be nonnegative and sum to 1".into()));
                }
                let first = rows_to_matrix(&matrices[0])?;
                for (i, m) in matrices.iter().enumerate() {
                    let m = rows_to_matrix(m)?;
                    if m.shape() != first.shape() || m.nrows() != m.ncols() {
                        return Err(Error::DimensionMismatch(format!("matrix {i} has shape {:?}", m.shape())));
                    }
                    if !passes_invertibility_guard(&m) {
                        return Err(Error::SequenceSingular(i));
                    }
                }
            }
            DriverKind::TorusRotation { alpha, family } => {
                if !alpha.is_finite() {
                    return Err(Error::ParamRange(format!("alpha = {alpha}")));
                }
                if let TorusFamily::Constant { matrix } = family {
                    let m = rows_to_matrix(matrix)?;
                    if m.nrows() != m.ncols() || !passes_invertibility_guard(&m) {
                        return Err(Error::ParamRange("torus family matrix must be square and invertible".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match &self.kind {
            DriverKind::IidAngles { .. } => 2,
            DriverKind::IidFiniteSet { matrices, .. } => matrices[0].len(),
            DriverKind::TorusRotation { family, .. } => match family {
                TorusFamily::Rotation { .. } => 2,
                TorusFamily::Constant { matrix } => matrix.len(),
            },
        }
    }

    fn rng(&self, rep: u64, purpose: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep.wrapping_mul(16).wrapping_add(purpose));
        rng
    }

    /// Initial `ω` of replication `rep` (torus drivers).
    pub fn initial_omega(&self, rep: u64) -> f64 {
        self.rng(rep, PURPOSE_OMEGA).random::<f64>()
    }
}

/// `n`-th uniform draw of a stream: two 32-bit words per `f64`.
fn uniform_at(base: &ChaCha8Rng, n: usize) -> f64 {
    let mut rng = base.clone();
    rng.set_word_pos(2 * n as u128);
    rng.random::<f64>()
}

/// The sampled path `n ↦ A(T^n ω)` of replication `rep`; produced lazily.
pub fn sample_path(driver: &CocycleDriver, rep: u64) -> Result<MatrixSequence> {
    driver.validate()?;
    let d = driver.dimension();
    let label = format!("cocycle(seed={}, rep={rep})", driver.seed);
    let seq = match &driver.kind {
        DriverKind::IidAngles { lo, hi } => {
            let base = driver.rng(rep, PURPOSE_PATH);
            let (lo, hi) = (*lo, *hi);
            MatrixSequence::from_fn(d, label, move |n| rotation_matrix(lo + (hi - lo) * uniform_at(&base, n)))
        }
        DriverKind::IidFiniteSet { matrices, probabilities } => {
            let mats: Arc<Vec<DMatrix<f64>>> =
                Arc::new(matrices.iter().map(|m| rows_to_matrix(m)).collect::<Result<_>>()?);
            if mats.len() == 1 {
                return Ok(MatrixSequence::constant(mats[0].clone())?.with_label(label));
            }
            let mut cdf = Vec::with_capacity(probabilities.len());
            let mut acc = 0.0;
            for p in probabilities {
                acc += p;
                cdf.push(acc);
            }
            let base = driver.rng(rep, PURPOSE_PATH);
            MatrixSequence::from_fn(d, label, move |n| {
                let u = uniform_at(&base, n);
                let k = cdf.iter().position(|&c| u < c).unwrap_or(mats.len() - 1);
                mats[k].clone()
            })
        }
        DriverKind::TorusRotation { alpha, family } => {
            if let TorusFamily::Constant { matrix } = family {
                return Ok(MatrixSequence::constant(rows_to_matrix(matrix)?)?.with_label(label));
            }
            let omega0 = driver.initial_omega(rep);
            let (alpha, family) = (*alpha, family.clone());
            MatrixSequence::from_fn(d, label, move |n| family.at((omega0 + n as f64 * alpha).rem_euclid(1.0)))
        }
    };
    Ok(seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomEstimate {
    pub value: f64,
    /// Standard error of the mean across replications.
    pub stderr: f64,
    pub n: usize,
    pub reps: usize,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Mean over replications of `a_n(ω, V₀)/n`.
pub fn birkhoff_outer(driver: &CocycleDriver, v0: &Frame, n: usize, reps: usize) -> Result<RandomEstimate> {
    if n == 0 || reps == 0 {
        return Err(Error::ParamRange("n and reps must be positive".into()));
    }
    let per_rep: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let seq = sample_path(driver, r)?;
            Ok(forward_angles(&seq, 0, v0, n)?.iter().sum::<f64>() / n as f64)
        })
        .collect::<Result<_>>()?;
    let (value, stderr) = mean_stderr(&per_rep);
    Ok(RandomEstimate { value, stderr, n, reps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    /// `max − min` across replications.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerEstimate {
    /// At the largest ladder entry.
    pub estimate: RandomEstimate,
    pub trace: Vec<TracePoint>,
}

/// Search set shared by all replications: frames must not depend on `ω`
/// for the uniform lower values, which take the infimum over `ω` first.
fn search_frames(driver: &CocycleDriver, cfg: &EstimatorConfig) -> Vec<Frame> {
    use crate::trajectory::SearchStrategy;
    let d = driver.dimension();
    let search = match cfg.search {
        SearchStrategy::Auto if (cfg.s, d) == (1, 2) => SearchStrategy::AngleGrid(720),
        SearchStrategy::Auto => SearchStrategy::RandomFrames(256),
        other => other,
    };
    match search {
        SearchStrategy::AngleGrid(m) => (0..m)
            .map(|i| {
                let t = PI * i as f64 / m as f64;
                Frame::line(&[t.cos(), t.sin()]).expect("unit vector")
            })
            .collect(),
        _ => {
            let m = if let SearchStrategy::RandomFrames(m) = search { m } else { 256 };
            let mut rng = driver.rng(u64::MAX / 16, PURPOSE_FRAMES);
            let mut out: Vec<Frame> = (0..m).map(|_| Frame::random(d, cfg.s, &mut rng)).collect();
            if cfg.s == 1 {
                out.extend((0..d).map(|i| Frame::coordinate(d, &[i]).expect("index in range")));
            }
            out
        }
    }
}

/// `f[r][v][i] = a_{n_i}(ω_r, V_v)/n_i`.
fn rep_frame_ladder(driver: &CocycleDriver, cfg: &EstimatorConfig, reps: usize) -> Result<(Vec<Frame>, Vec<Vec<Vec<f64>>>)> {
    cfg.validate(driver.dimension())?;
    if reps == 0 {
        return Err(Error::ParamRange("reps must be positive".into()));
    }
    let frames = search_frames(driver, cfg);
    let n_max = *cfg.n_ladder.last().expect("validated");
    let f = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let seq = sample_path(driver, r)?;
            frames
                .iter()
                .map(|v| {
                    let b = forward_angles(&seq, 0, v, n_max)?;
                    let mut acc = 0.0;
                    let mut out = Vec::with_capacity(cfg.n_ladder.len());
                    let mut it = cfg.n_ladder.iter().peekable();
                    for (j, x) in b.iter().enumerate() {
                        acc += x;
                        while let Some(&&n) = it.peek() {
                            if n == j + 1 {
                                out.push(acc / n as f64);
                                it.next();
                            } else {
                                break;
                            }
                        }
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((frames, f))
}

fn inner_from(cfg: &EstimatorConfig, f: &[Vec<Vec<f64>>]) -> InnerEstimate {
    let reps = f.len();
    let trace: Vec<TracePoint> = cfg
        .n_ladder
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let per_rep: Vec<f64> =
                f.iter().map(|fr| fr.iter().map(|fv| fv[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
            let (mean, stderr) = mean_stderr(&per_rep);
            let spread = per_rep.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - per_rep.iter().copied().fold(f64::INFINITY, f64::min);
            TracePoint { n, mean, stderr, spread }
        })
        .collect();
    let last = trace.last().expect("nonempty ladder");
    InnerEstimate { estimate: RandomEstimate { value: last.mean, stderr: last.stderr, n: last.n, reps }, trace }
}

/// Mean over replications of `max_V a_n(ω, V)/n` at every ladder entry.
pub fn inner_estimate(driver: &CocycleDriver, cfg: &EstimatorConfig, reps: usize) -> Result<InnerEstimate> {
    let (_, f) = rep_frame_ladder(driver, cfg, reps)?;
    Ok(inner_from(cfg, &f))
}

/// Finite-sample proxies of the six values compared for random systems.
/// Upper/lower limits use the last third of the ladder; essential suprema and
/// infima over `ω` become maxima and minima over the replications, which only
/// bound the true values from inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomAngularEstimates {
    pub inner: f64,
    pub outer_upper: f64,
    pub outer_lower: f64,
    pub uniform_inner_upper: f64,
    pub uniform_inner_lower: f64,
    pub uniform_outer_upper: f64,
    pub uniform_outer_lower: f64,
    pub inner_trace: Vec<TracePoint>,
    pub reps: usize,
    pub candidates: usize,
}

impl RandomAngularEstimates {
    /// Violated inequalities of the random comparison diagram, beyond `tol`.
    pub fn ordering_violations(&self, tol: f64) -> Vec<String> {
        let pairs = [
            ("uniform_outer_lower", self.uniform_outer_lower, "outer_lower", self.outer_lower),
            ("outer_lower", self.outer_lower, "outer_upper", self.outer_upper),
            ("outer_upper", self.outer_upper, "uniform_outer_upper", self.uniform_outer_upper),
            ("uniform_inner_lower", self.uniform_inner_lower, "inner", self.inner),
            ("inner", self.inner, "uniform_inner_upper", self.uniform_inner_upper),
            ("uniform_outer_lower", self.uniform_outer_lower, "uniform_inner_lower", self.uniform_inner_lower),
            ("outer_lower", self.outer_lower, "inner", self.inner),
            ("outer_upper", self.outer_upper, "inner", self.inner),
            ("uniform_outer_upper", self.uniform_outer_upper, "uniform_inner_upper", self.uniform_inner_upper),
        ];
        pairs
            .iter()
            .filter(|(_, x, _, y)| x > &(y + tol))
            .map(|(a, x, b, y)| format!("{a} = {x} > {b} = {y}"))
            .collect()
    }
}

pub fn random_angular_values(driver: &CocycleDriver, cfg: &EstimatorConfig, reps: usize) -> Result<RandomAngularEstimates> {
    let (frames, f) = rep_frame_ladder(driver, cfg, reps)?;
    let tail = cfg.tail();
    let nv = frames.len();
    let tmax = |v: &[f64]| v[tail.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tmin = |v: &[f64]| v[tail.clone()].iter().copied().fold(f64::INFINITY, f64::min);
    let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
    let maxf = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
    let minf = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::INFINITY, f64::min);

    let inner_pt = inner_from(cfg, &f);
    let inner = mean(f.iter().map(|fr| maxf(&mut fr.iter().map(|fv| tmax(fv)))).collect());
    let outer_upper = inner;
    let outer_lower = mean(f.iter().map(|fr| maxf(&mut fr.iter().map(|fv| tmin(fv)))).collect());
    let uniform_outer_upper = maxf(&mut f.iter().flat_map(|fr| fr.iter().map(|fv| tmax(fv))));
    let uniform_inner_upper = uniform_outer_upper;
    let uniform_outer_lower = maxf(&mut (0..nv).map(|v| minf(&mut f.iter().map(|fr| tmin(&fr[v])))));
    let uniform_inner_lower = minf(
        &mut tail.clone().map(|i| maxf(&mut (0..nv).map(|v| minf(&mut f.iter().map(|fr| fr[v][i]))))),
    );
    Ok(RandomAngularEstimates {
        inner,
        outer_upper,
        outer_lower,
        uniform_inner_upper,
        uniform_inner_lower,
        uniform_outer_upper,
        uniform_outer_lower,
        inner_trace: inner_pt.trace,
        reps,
        candidates: nv,
    })
}

/// `d × d` matrix with iid uniform(0, 1) entries.
pub fn random_uniform_matrix(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(d, d, |_, _| rng.random::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomMatrixReport {
    pub d: usize,
    pub seed: u64,
    pub theta1: f64,
    /// Number of two-dimensional (complex pair) blocks.
    pub complex_blocks: usize,
    pub real_blocks: usize,
    /// Block values in ascending order; real blocks contribute exact zeros.
    pub sorted_values: Vec<f64>,
    pub histogram: Vec<HistogramBin>,
}

/// `θ₁` of a random uniform matrix with its sorted block values and a histogram over `[0, π/2]`.
pub fn random_matrix_experiment(d: usize, seed: u64, bins: usize, opts: &AutoOptions) -> Result<RandomMatrixReport> {
    if d == 0 || bins == 0 {
        return Err(Error::ParamRange("d and bins must be positive".into()));
    }
    let a = random_uniform_matrix(d, seed);
    let rep = theta1_autonomous(&a, opts)?;
    let sorted_values = rep.sorted_block_values();
    let width = FRAC_PI_2 / bins as f64;
    let mut histogram: Vec<HistogramBin> =
        (0..bins).map(|i| HistogramBin { lo: i as f64 * width, hi: (i + 1) as f64 * width, count: 0 }).collect();
    for &v in &sorted_values {
        let k = ((v / width) as usize).min(bins - 1);
        histogram[k].count += 1;
    }
    Ok(RandomMatrixReport {
        d,
        seed,
        theta1: rep.theta1,
        complex_blocks: rep.count_kind(BlockKind::ComplexPair),
        real_blocks: rep.count_kind(BlockKind::RealSingle),
        sorted_values,
        histogram,
    })
}
