//! Finite-horizon estimates of the eight angular values.
//!
//! With `f_V(n) = a_{1,n}(V)/n`, `u_V(n) = max_{k ≤ K} a_{k+1,k+n}(V)/n` and
//! `l_V(n) = min_{k ≤ K} a_{k+1,k+n}(V)/n`, and `T` the last third of the
//! ladder, the proxies are
//!
//! | value                | proxy                                  |
//! |----------------------|----------------------------------------|
//! | inner upper / lower  | `max_T` / `min_T` of `max_V f_V(n)`    |
//! | outer upper / lower  | `max_V` of `max_T` / `min_T` of `f_V`  |
//! | uniform inner upper  | `max_T max_V u_V(n)` (plus restarts)   |
//! | uniform inner lower  | `min_T max_V l_V(n)`                   |
//! | uniform outer upper  | `max_V max_T u_V(n)`                   |
//! | uniform outer lower  | `max_V min_T l_V(n)`                   |
//!
//! All eight are computed from one pool of candidates, so the comparison
//! diagram holds exactly. Inner-only seeds enter the inner maxima but never
//! the outer ones.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::orbit::{anchored_orbit_angles, forward_angles};
use super::sequence::{AnchoredSeed, MatrixSequence};
use crate::error::{Error, Result};
use crate::geometry::{orthonormalize, Frame};
use crate::numeric::golden_max;
use crate::spectral::{modulus_blocks, BlockKind, DEFAULT_TOL_MOD};

/// How the supremum over the Grassmannian is searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "count", rename_all = "snake_case")]
pub enum SearchStrategy {
    /// Angle grid of 720 lines for `(s, d) = (1, 2)`, 256 random frames otherwise.
    Auto,
    /// Lines at angles `iπ/m`; only for `(s, d) = (1, 2)`.
    AngleGrid(usize),
    /// Haar-random frames.
    RandomFrames(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub s: usize,
    pub n_ladder: Vec<usize>,
    pub k_window: usize,
    pub search: SearchStrategy,
    pub seed: u64,
    /// Local refinement around the best candidate of every objective.
    pub refine: bool,
    /// Use the inner-only seeds and restart anchors carried by the sequence.
    pub use_hints: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            s: 1,
            n_ladder: vec![100, 1000, 10_000],
            k_window: 1000,
            search: SearchStrategy::Auto,
            seed: 0,
            refine: true,
            use_hints: true,
        }
    }
}

impl EstimatorConfig {
    /// Defaults, with the ladder and window replaced by the sequence's own when it has them.
    pub fn suggested(seq: &MatrixSequence) -> Self {
        let mut cfg = EstimatorConfig::default();
        if let Some(l) = &seq.hints().ladder {
            cfg.n_ladder = l.clone();
        }
        if let Some(k) = seq.hints().k_window {
            cfg.k_window = k;
        }
        cfg
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.s == 0 || self.s > d {
            return Err(Error::ParamRange(format!("subspace dimension {} not in 1..={d}", self.s)));
        }
        if self.n_ladder.is_empty() || self.n_ladder[0] == 0 || self.n_ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ParamRange(format!("n_ladder must be positive and increasing, got {:?}", self.n_ladder)));
        }
        match self.search {
            SearchStrategy::AngleGrid(0) | SearchStrategy::RandomFrames(0) => {
                Err(Error::ParamRange("search needs at least one candidate".into()))
            }
            SearchStrategy::AngleGrid(_) if (self.s, d) != (1, 2) => {
                Err(Error::ParamRange("an angle grid needs lines in the plane".into()))
            }
            _ => Ok(()),
        }
    }

    /// Indices of the ladder entries used for limsup/liminf: the last third.
    pub fn tail(&self) -> std::ops::Range<usize> {
        let len = self.n_ladder.len();
        len - len.div_ceil(3)..len
    }

    fn resolved_search(&self, d: usize) -> SearchStrategy {
        match self.search {
            SearchStrategy::Auto if (self.s, d) == (1, 2) => SearchStrategy::AngleGrid(720),
            SearchStrategy::Auto => SearchStrategy::RandomFrames(256),
            other => other,
        }
    }

    fn horizon(&self) -> usize {
        self.k_window + self.n_ladder.last().copied().unwrap_or(0)
    }
}

/// The subspace that attains an estimate, given at time `anchor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Maximizer {
    pub label: String,
    pub anchor: usize,
    /// Column-major `d × s` orthonormal basis.
    pub basis: Vec<f64>,
    /// Ladder entry at which the value was attained, when it depends on one.
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// One entry per ladder horizon.
    pub trace: Vec<f64>,
    pub argmax: Maximizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularEstimates {
    pub label: String,
    pub dim: usize,
    pub s: usize,
    pub ladder: Vec<usize>,
    /// Ladder entries used as the limsup/liminf window.
    pub tail: Vec<usize>,
    pub k_window: usize,
    pub inner_upper: Estimate,
    pub inner_lower: Estimate,
    pub outer_upper: Estimate,
    pub outer_lower: Estimate,
    pub uniform_inner_upper: Estimate,
    pub uniform_inner_lower: Estimate,
    pub uniform_outer_upper: Estimate,
    pub uniform_outer_lower: Estimate,
    /// Number of subspaces evaluated, refinement included.
    pub candidates: usize,
    /// Number of (anchor, frame) restarts probed for the uniform inner upper value.
    pub restarts: usize,
}

/// Pairs `(smaller, larger)` of the comparison diagram.
pub const ORDERING: [(&str, &str); 10] = [
    ("uniform_outer_lower", "outer_lower"),
    ("outer_lower", "outer_upper"),
    ("outer_upper", "uniform_outer_upper"),
    ("uniform_inner_lower", "inner_lower"),
    ("inner_lower", "inner_upper"),
    ("inner_upper", "uniform_inner_upper"),
    ("uniform_outer_lower", "uniform_inner_lower"),
    ("outer_lower", "inner_lower"),
    ("outer_upper", "inner_upper"),
    ("uniform_outer_upper", "uniform_inner_upper"),
];

impl AngularEstimates {
    pub fn values(&self) -> [(&'static str, f64); 8] {
        [
            ("inner_upper", self.inner_upper.value),
            ("inner_lower", self.inner_lower.value),
            ("outer_upper", self.outer_upper.value),
            ("outer_lower", self.outer_lower.value),
            ("uniform_inner_upper", self.uniform_inner_upper.value),
            ("uniform_inner_lower", self.uniform_inner_lower.value),
            ("uniform_outer_upper", self.uniform_outer_upper.value),
            ("uniform_outer_lower", self.uniform_outer_lower.value),
        ]
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.values().iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    /// Violated inequalities of the comparison diagram, beyond `tol`.
    pub fn ordering_violations(&self, tol: f64) -> Vec<String> {
        ORDERING
            .iter()
            .filter_map(|&(a, b)| {
                let (x, y) = (self.value(a)?, self.value(b)?);
                (x > y + tol).then(|| format!("{a} = {x} > {b} = {y}"))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
enum Start {
    Time0(Frame),
    Anchored(AnchoredSeed),
}

#[derive(Debug, Clone)]
struct Candidate {
    label: String,
    start: Start,
    /// Eligible for the outer values (a genuine time-0 subspace).
    outer: bool,
}

impl Candidate {
    fn maximizer(&self, n: Option<usize>) -> Maximizer {
        let (anchor, basis) = match &self.start {
            Start::Time0(f) => (0, f.matrix().as_slice().to_vec()),
            Start::Anchored(seed) => {
                let b = orthonormalize(&seed.basis).map(|f| f.into_matrix()).unwrap_or_else(|_| seed.basis.clone());
                (seed.anchor, b.as_slice().to_vec())
            }
        };
        Maximizer { label: self.label.clone(), anchor, basis, n }
    }
}

/// Per-ladder `f`, `u`, `l` of one candidate.
#[derive(Debug, Clone)]
struct Stats {
    f: Vec<f64>,
    u: Vec<f64>,
    l: Vec<f64>,
}

struct Evaluator<'a> {
    seq: &'a MatrixSequence,
    ladder: &'a [usize],
    k_window: usize,
    horizon: usize,
}

impl Evaluator<'_> {
    fn angles(&self, start: &Start) -> Result<Vec<f64>> {
        match start {
            Start::Time0(f) => forward_angles(self.seq, 0, f, self.horizon),
            Start::Anchored(seed) => anchored_orbit_angles(self.seq, seed, self.horizon),
        }
    }

    fn stats(&self, start: &Start) -> Result<Stats> {
        let b = self.angles(start)?;
        let p = prefix_sums(&b);
        let mut st = Stats { f: Vec::new(), u: Vec::new(), l: Vec::new() };
        for &n in self.ladder {
            let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
            for k in 0..=self.k_window {
                let w = p[k + n] - p[k];
                hi = hi.max(w);
                lo = lo.min(w);
            }
            st.f.push(p[n] / n as f64);
            st.u.push(hi / n as f64);
            st.l.push(lo / n as f64);
        }
        Ok(st)
    }
}

fn prefix_sums(b: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(b.len() + 1);
    let mut acc = 0.0;
    p.push(0.0);
    for &x in b {
        acc += x;
        p.push(acc);
    }
    p
}

/// Scalar objectives maximized over candidates during refinement.
#[derive(Debug, Clone, Copy)]
enum Objective {
    F(usize),
    U(usize),
    L(usize),
    MaxF,
    MinF,
    MaxU,
    MinL,
}

impl Objective {
    fn score(self, st: &Stats, tail: &std::ops::Range<usize>) -> f64 {
        let over = |v: &[f64], take_max: bool| {
            let it = v[tail.clone()].iter().copied();
            if take_max {
                it.fold(f64::NEG_INFINITY, f64::max)
            } else {
                it.fold(f64::INFINITY, f64::min)
            }
        };
        match self {
            Objective::F(i) => st.f[i],
            Objective::U(i) => st.u[i],
            Objective::L(i) => st.l[i],
            Objective::MaxF => over(&st.f, true),
            Objective::MinF => over(&st.f, false),
            Objective::MaxU => over(&st.u, true),
            Objective::MinL => over(&st.l, false),
        }
    }
}

fn line_at(t: f64) -> Frame {
    Frame::line(&[t.cos(), t.sin()]).expect("unit vector")
}

fn binomial(n: usize, k: usize) -> usize {
    let mut r: usize = 1;
    for i in 0..k.min(n - k) {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Subspaces built from the invariant subspaces of a constant sequence.
fn invariant_seeds(a: &DMatrix<f64>, s: usize) -> Vec<(String, Frame)> {
    let Ok(dec) = modulus_blocks(a, DEFAULT_TOL_MOD) else {
        return Vec::new();
    };
    let d = a.nrows();
    let mut out = Vec::new();
    // Lines inside each block, and for s ≥ 2 the line completed by the other blocks.
    for (i, blk) in dec.blocks.iter().enumerate() {
        let q = blk.q.matrix();
        let mut lines = Vec::new();
        for c in 0..q.ncols() {
            lines.push(q.column(c).into_owned());
        }
        if blk.kind != BlockKind::RealSingle && q.ncols() >= 2 {
            for k in 0..16 {
                let t = PI * k as f64 / 16.0;
                lines.push(q.column(0) * t.cos() + q.column(1) * t.sin());
            }
        }
        let others: Vec<_> = dec
            .blocks
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, b)| (0..b.q.rank()).map(move |c| b.q.matrix().column(c).into_owned()))
            .collect();
        for (k, line) in lines.iter().enumerate() {
            if s == 1 {
                if let Ok(f) = Frame::line(line.as_slice()) {
                    out.push((format!("block {i} line {k}"), f));
                }
            } else if others.len() >= s - 1 {
                let mut m = DMatrix::zeros(d, s);
                m.set_column(0, line);
                for (c, col) in others.iter().take(s - 1).enumerate() {
                    m.set_column(c + 1, col);
                }
                if let Ok(f) = orthonormalize(&m) {
                    out.push((format!("block {i} line {k} + others"), f));
                }
            }
        }
    }
    // Sums of whole blocks of total dimension s.
    let dims: Vec<usize> = dec.blocks.iter().map(|b| b.dim()).collect();
    let nb = dims.len();
    if nb <= 12 {
        for mask in 1u32..(1 << nb) {
            let chosen: Vec<usize> = (0..nb).filter(|j| mask & (1 << j) != 0).collect();
            if chosen.iter().map(|&j| dims[j]).sum::<usize>() != s {
                continue;
            }
            let cols: Vec<_> = chosen
                .iter()
                .flat_map(|&j| (0..dims[j]).map(move |c| (j, c)))
                .map(|(j, c)| dec.blocks[j].q.matrix().column(c).into_owned())
                .collect();
            if let Ok(f) = orthonormalize(&DMatrix::from_columns(&cols)) {
                out.push((format!("blocks {chosen:?}"), f));
            }
        }
    }
    out.truncate(256);
    out
}

fn initial_candidates(seq: &MatrixSequence, cfg: &EstimatorConfig, search: SearchStrategy) -> Vec<Candidate> {
    let d = seq.dimension();
    let s = cfg.s;
    let mut out = Vec::new();
    match search {
        SearchStrategy::AngleGrid(m) => {
            for i in 0..m {
                let t = PI * i as f64 / m as f64;
                out.push(Candidate { label: format!("grid {i}/{m}"), start: Start::Time0(line_at(t)), outer: true });
            }
        }
        SearchStrategy::RandomFrames(m) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(1);
            for i in 0..m {
                let f = Frame::random(d, s, &mut rng);
                out.push(Candidate { label: format!("random {i}"), start: Start::Time0(f), outer: true });
            }
        }
        SearchStrategy::Auto => unreachable!("resolved before use"),
    }
    if binomial(d, s) <= 64 {
        for idx in combinations(d, s) {
            let f = Frame::coordinate(d, &idx).expect("valid indices");
            out.push(Candidate { label: format!("coordinate {idx:?}"), start: Start::Time0(f), outer: true });
        }
    }
    if let Some(a) = &seq.hints().constant {
        for (label, f) in invariant_seeds(a, s) {
            out.push(Candidate { label: format!("invariant {label}"), start: Start::Time0(f), outer: true });
        }
    }
    if cfg.use_hints {
        for seed in &seq.hints().inner_seeds {
            if seed.basis.nrows() == d && seed.basis.ncols() == s {
                out.push(Candidate { label: seed.label.clone(), start: Start::Anchored(seed.clone()), outer: false });
            }
        }
    }
    out
}

/// Givens rotation of rows `i`, `j` of a frame by angle `h`.
fn givens(q: &DMatrix<f64>, i: usize, j: usize, h: f64) -> DMatrix<f64> {
    let (sn, cs) = h.sin_cos();
    let mut out = q.clone();
    for c in 0..q.ncols() {
        let (a, b) = (q[(i, c)], q[(j, c)]);
        out[(i, c)] = cs * a - sn * b;
        out[(j, c)] = sn * a + cs * b;
    }
    out
}

/// Derivative-free local search on the Grassmannian by single-plane rotations
/// with a shrinking step. Returns every frame it evaluated with its stats.
fn givens_search(
    ev: &Evaluator,
    start: &Frame,
    start_score: f64,
    score: impl Fn(&Stats) -> f64,
    rng: &mut ChaCha8Rng,
    budget: usize,
) -> Result<Vec<(Frame, Stats)>> {
    let d = start.dim();
    let planes: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let mut best = start.matrix().clone();
    let mut best_score = start_score;
    let mut seen = Vec::new();
    let mut h = 0.1;
    let mut evals = 0;
    while h > 1e-4 && evals < budget {
        let mut improved = false;
        let trial_planes: Vec<(usize, usize)> = if planes.len() <= 12 {
            planes.clone()
        } else {
            (0..12).map(|_| planes[rng.random_range(0..planes.len())]).collect()
        };
        for (i, j) in trial_planes {
            for sign in [1.0, -1.0] {
                if evals >= budget {
                    break;
                }
                let q = givens(&best, i, j, sign * h);
                let f = Frame::new(&q)?;
                let st = ev.stats(&Start::Time0(f.clone()))?;
                evals += 1;
                let sc = score(&st);
                seen.push((f, st));
                if sc > best_score {
                    best_score = sc;
                    best = q;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.3;
        }
    }
    Ok(seen)
}

/// Finite-horizon estimates of all eight angular values.
pub fn estimate_angular_values(seq: &MatrixSequence, cfg: &EstimatorConfig) -> Result<AngularEstimates> {
    let d = seq.dimension();
    cfg.validate(d)?;
    let search = cfg.resolved_search(d);
    let ladder = cfg.n_ladder.clone();
    let tail = cfg.tail();
    let ev = Evaluator { seq, ladder: &ladder, k_window: cfg.k_window, horizon: cfg.horizon() };

    let mut pool = initial_candidates(seq, cfg, search);
    let mut stats: Vec<Stats> = pool.par_iter().map(|c| ev.stats(&c.start)).collect::<Result<_>>()?;

    if cfg.refine && cfg.s < d {
        let mut objectives = Vec::new();
        for i in tail.clone() {
            objectives.extend([Objective::F(i), Objective::U(i), Objective::L(i)]);
        }
        objectives.extend([Objective::MaxF, Objective::MinF, Objective::MaxU, Objective::MinL]);
        let found: Vec<Vec<(Candidate, Stats)>> = objectives
            .par_iter()
            .enumerate()
            .map(|(oi, &obj)| refine(&ev, &pool, &stats, obj, &tail, search, cfg.seed, oi as u64))
            .collect::<Result<_>>()?;
        for (c, st) in found.into_iter().flatten() {
            pool.push(c);
            stats.push(st);
        }
    }

    let restarts = if cfg.use_hints { restart_values(&ev, seq, &pool, cfg)? } else { Vec::new() };
    Ok(assemble(seq, cfg, &ladder, tail, &pool, &stats, &restarts))
}

#[allow(clippy::too_many_arguments)]
fn refine(
    ev: &Evaluator,
    pool: &[Candidate],
    stats: &[Stats],
    obj: Objective,
    tail: &std::ops::Range<usize>,
    search: SearchStrategy,
    seed: u64,
    stream: u64,
) -> Result<Vec<(Candidate, Stats)>> {
    let best = (0..pool.len())
        .filter(|&i| pool[i].outer)
        .max_by(|&a, &b| obj.score(&stats[a], tail).total_cmp(&obj.score(&stats[b], tail)));
    let Some(best) = best else { return Ok(Vec::new()) };
    let best_score = obj.score(&stats[best], tail);
    let Start::Time0(frame) = &pool[best].start else { return Ok(Vec::new()) };
    let mut out = Vec::new();
    match search {
        SearchStrategy::AngleGrid(m) => {
            let v = frame.matrix();
            let t0 = v[(1, 0)].atan2(v[(0, 0)]);
            let h = PI / m as f64;
            let mut evaluated = Vec::new();
            let mut err = None;
            golden_max(
                |t| {
                    if err.is_some() {
                        return f64::NEG_INFINITY;
                    }
                    match ev.stats(&Start::Time0(line_at(t))) {
                        Ok(st) => {
                            let sc = obj.score(&st, tail);
                            evaluated.push((t, st));
                            sc
                        }
                        Err(e) => {
                            err = Some(e);
                            f64::NEG_INFINITY
                        }
                    }
                },
                t0 - h,
                t0 + h,
                1e-9,
            );
            if let Some(e) = err {
                return Err(e);
            }
            let top = evaluated.into_iter().max_by(|a, b| obj.score(&a.1, tail).total_cmp(&obj.score(&b.1, tail)));
            if let Some((t, st)) = top {
                out.push((Candidate { label: format!("refined {obj:?} t={t}"), start: Start::Time0(line_at(t)), outer: true }, st));
            }
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1000 + stream);
            let seen = givens_search(ev, frame, best_score, |st| obj.score(st, tail), &mut rng, 48)?;
            let top = seen.into_iter().max_by(|a, b| obj.score(&a.1, tail).total_cmp(&obj.score(&b.1, tail)));
            if let Some((f, st)) = top {
                out.push((Candidate { label: format!("refined {obj:?}"), start: Start::Time0(f), outer: true }, st));
            }
        }
    }
    Ok(out)
}

/// Best `a_{k+1,k+n}/n` over restart frames at each anchor `k ≤ K`, per ladder entry.
fn restart_values(
    ev: &Evaluator,
    seq: &MatrixSequence,
    pool: &[Candidate],
    cfg: &EstimatorConfig,
) -> Result<Vec<(f64, Candidate)>> {
    let anchors: Vec<usize> =
        seq.hints().restart_anchors.iter().copied().filter(|&k| k <= cfg.k_window && k > 0).collect();
    if anchors.is_empty() {
        return Ok(Vec::new());
    }
    let frames: Vec<&Frame> = pool
        .iter()
        .filter_map(|c| match &c.start {
            Start::Time0(f) if c.outer => Some(f),
            _ => None,
        })
        .collect();
    let stride = frames.len().div_ceil(64).max(1);
    let n_max = *ev.ladder.last().expect("nonempty ladder");
    let mut jobs: Vec<(usize, Frame, String)> = Vec::new();
    for &k in &anchors {
        for (i, f) in frames.iter().step_by(stride).enumerate() {
            jobs.push((k, (*f).clone(), format!("restart at {k} frame {i}")));
        }
        for seed in seq.hints().inner_seeds.iter().filter(|s| s.anchor == k) {
            if let Ok(f) = orthonormalize(&seed.basis) {
                if f.rank() == cfg.s {
                    jobs.push((k, f, format!("restart at {k} {}", seed.label)));
                }
            }
        }
    }
    let per_job: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|(k, f, _)| {
            let p = prefix_sums(&forward_angles(seq, *k, f, n_max)?);
            Ok(ev.ladder.iter().map(|&n| p[n] / n as f64).collect())
        })
        .collect::<Result<_>>()?;
    let mut best: Vec<(f64, Candidate)> = Vec::new();
    for i in 0..ev.ladder.len() {
        let j = (0..jobs.len()).max_by(|&a, &b| per_job[a][i].total_cmp(&per_job[b][i])).expect("jobs");
        let (k, f, label) = &jobs[j];
        let basis = f.matrix().clone();
        best.push((
            per_job[j][i],
            Candidate {
                label: label.clone(),
                start: Start::Anchored(AnchoredSeed { anchor: *k, basis, label: label.clone() }),
                outer: false,
            },
        ));
    }
    Ok(best)
}

fn argbest(idx: impl Iterator<Item = usize>, key: impl Fn(usize) -> f64) -> usize {
    idx.max_by(|&a, &b| key(a).total_cmp(&key(b)).then(b.cmp(&a))).expect("nonempty candidate set")
}

fn assemble(
    seq: &MatrixSequence,
    cfg: &EstimatorConfig,
    ladder: &[usize],
    tail: std::ops::Range<usize>,
    pool: &[Candidate],
    stats: &[Stats],
    restarts: &[(f64, Candidate)],
) -> AngularEstimates {
    let all = || 0..pool.len();
    let outer = || (0..pool.len()).filter(|&i| pool[i].outer);
    let tail_max = |v: &[f64]| v[tail.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail_min = |v: &[f64]| v[tail.clone()].iter().copied().fold(f64::INFINITY, f64::min);
    let tail_argmax = |v: &[f64]| argbest(tail.clone(), |i| v[i]);
    let tail_argmin = |v: &[f64]| argbest(tail.clone(), |i| -v[i]);

    // Inner: per-n maxima over every candidate.
    let per_n = |sel: fn(&Stats) -> &Vec<f64>| -> (Vec<f64>, Vec<usize>) {
        let mut vals = Vec::new();
        let mut who = Vec::new();
        for i in 0..ladder.len() {
            let j = argbest(all(), |c| sel(&stats[c])[i]);
            vals.push(sel(&stats[j])[i]);
            who.push(j);
        }
        (vals, who)
    };
    let (g, g_who) = per_n(|s| &s.f);
    let (gu, gu_who) = per_n(|s| &s.u);
    let (gl, gl_who) = per_n(|s| &s.l);

    let inner_est = |trace: &[f64], who: &[usize], upper: bool| {
        let i = if upper { tail_argmax(trace) } else { tail_argmin(trace) };
        Estimate { value: trace[i], trace: trace.to_vec(), argmax: pool[who[i]].maximizer(Some(ladder[i])) }
    };
    let inner_upper = inner_est(&g, &g_who, true);
    let inner_lower = inner_est(&g, &g_who, false);
    let uniform_inner_lower = inner_est(&gl, &gl_who, false);

    // Uniform inner upper also sees the restarts.
    let mut uiu_trace = gu.clone();
    let mut uiu_who: Vec<Maximizer> = gu_who.iter().zip(ladder).map(|(&j, &n)| pool[j].maximizer(Some(n))).collect();
    for (i, (v, c)) in restarts.iter().enumerate() {
        if *v > uiu_trace[i] {
            uiu_trace[i] = *v;
            uiu_who[i] = c.maximizer(Some(ladder[i]));
        }
    }
    let i = tail_argmax(&uiu_trace);
    let uniform_inner_upper = Estimate { value: uiu_trace[i], trace: uiu_trace.clone(), argmax: uiu_who[i].clone() };

    let outer_est = |sel: fn(&Stats) -> &Vec<f64>, upper: bool| {
        let key = |c: usize| if upper { tail_max(sel(&stats[c])) } else { tail_min(sel(&stats[c])) };
        let j = argbest(outer(), key);
        Estimate { value: key(j), trace: sel(&stats[j]).clone(), argmax: pool[j].maximizer(None) }
    };

    AngularEstimates {
        label: seq.label().to_string(),
        dim: seq.dimension(),
        s: cfg.s,
        ladder: ladder.to_vec(),
        tail: ladder[tail.clone()].to_vec(),
        k_window: cfg.k_window,
        inner_upper,
        inner_lower,
        outer_upper: outer_est(|s| &s.f, true),
        outer_lower: outer_est(|s| &s.f, false),
        uniform_inner_upper,
        uniform_inner_lower,
        uniform_outer_upper: outer_est(|s| &s.u, true),
        uniform_outer_lower: outer_est(|s| &s.l, false),
        candidates: pool.len(),
        restarts: restarts.len(),
    }
}

/// Result of maximizing `a_{1,n}(V)/n` over subspaces at a single horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMax {
    pub value: f64,
    pub argmax: Maximizer,
    pub candidates: usize,
}

/// `max_V a_{1,n}(V)/n` for an autonomous system: the direct optimization
/// against which the closed-form first angular value is checked.
pub fn trajectory_max(a: &DMatrix<f64>, s: usize, n: usize, search: SearchStrategy, seed: u64) -> Result<TrajectoryMax> {
    let seq = MatrixSequence::constant(a.clone())?;
    let cfg = EstimatorConfig {
        s,
        n_ladder: vec![n],
        k_window: 0,
        search,
        seed,
        refine: true,
        use_hints: false,
    };
    cfg.validate(seq.dimension())?;
    let search = cfg.resolved_search(seq.dimension());
    let ladder = [n];
    let ev = Evaluator { seq: &seq, ladder: &ladder, k_window: 0, horizon: n };
    let mut pool = initial_candidates(&seq, &cfg, search);
    let mut stats: Vec<Stats> = pool.par_iter().map(|c| ev.stats(&c.start)).collect::<Result<_>>()?;
    let tail = 0..1;
    if s < seq.dimension() {
        for (c, st) in refine(&ev, &pool, &stats, Objective::F(0), &tail, search, seed, 0)? {
            pool.push(c);
            stats.push(st);
        }
    }
    let j = argbest(0..pool.len(), |c| stats[c].f[0]);
    Ok(TrajectoryMax { value: stats[j].f[0], argmax: pool[j].maximizer(Some(n)), candidates: pool.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::sequence::rotation_matrix;

    fn quick(seq: &MatrixSequence, ladder: Vec<usize>, k: usize) -> AngularEstimates {
        let cfg = EstimatorConfig { n_ladder: ladder, k_window: k, search: SearchStrategy::Auto, ..Default::default() };
        estimate_angular_values(seq, &cfg).unwrap()
    }

    #[test]
    fn rotation_all_equal() {
        for phi in [0.7, 2.5] {
            let est = quick(&MatrixSequence::rotation(phi).unwrap(), vec![50, 100, 200], 20);
            let target = phi.min(PI - phi);
            for (name, v) in est.values() {
                assert!((v - target).abs() < 1e-9, "{name} = {v}");
            }
            assert!(est.ordering_violations(1e-6).is_empty());
        }
    }

    #[test]
    fn tail_is_last_third() {
        let cfg = EstimatorConfig { n_ladder: vec![1, 2, 3, 4, 5], ..Default::default() };
        assert_eq!(cfg.tail(), 3..5);
        let cfg = EstimatorConfig { n_ladder: vec![7], ..Default::default() };
        assert_eq!(cfg.tail(), 0..1);
    }

    #[test]
    fn config_validation() {
        let bad = EstimatorConfig { n_ladder: vec![10, 5], ..Default::default() };
        assert!(bad.validate(2).is_err());
        let bad = EstimatorConfig { s: 3, ..Default::default() };
        assert!(bad.validate(2).is_err());
        let bad = EstimatorConfig { search: SearchStrategy::AngleGrid(10), ..Default::default() };
        assert!(bad.validate(3).is_err());
    }

    #[test]
    fn combinations_enumerate() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(binomial(10, 3), 120);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn invariant_line_beats_generic_lines() {
        // Lines in the rotation plane rotate by φ; generic lines align with e₃.
        let mut a = DMatrix::zeros(3, 3);
        a.view_mut((0, 0), (2, 2)).copy_from(&rotation_matrix(0.8));
        a[(2, 2)] = 2.0;
        let seq = MatrixSequence::constant(a).unwrap();
        let cfg = EstimatorConfig {
            n_ladder: vec![100, 300],
            k_window: 10,
            search: SearchStrategy::RandomFrames(16),
            refine: false,
            ..Default::default()
        };
        let est = estimate_angular_values(&seq, &cfg).unwrap();
        assert!((est.outer_upper.value - 0.8).abs() < 1e-12);
        assert!(est.ordering_violations(1e-12).is_empty());
    }

    #[test]
    fn trajectory_max_on_rotation() {
        let r = trajectory_max(&rotation_matrix(0.4), 1, 100, SearchStrategy::AngleGrid(36), 0).unwrap();
        assert!((r.value - 0.4).abs() < 1e-12);
    }
}
