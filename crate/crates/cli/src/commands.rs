use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::Path;

use angval::autonomous::{theta1_autonomous, AutoOptions, AutoThetaReport, BlockMethod};
use angval::geometry::{orthonormality_defect, principal_angles, Frame};
use angval::io::read_matrix;
use angval::random::{
    birkhoff_outer, inner_estimate, random_angular_values, random_matrix_experiment, CocycleDriver, RandomMatrixReport,
};
use angval::theta2d::{critical_phi, theta1_normal, ThetaOptions};
use angval::trajectory::{
    builtin_sequence, estimate_angular_values, orbit_angles, AngularEstimates, BuiltinKind, EstimatorConfig,
    MatrixSequence, SearchStrategy,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::output::{to_json, Table};
use crate::{Cli, Command, Common, EstimatorArgs, Format, MatrixTable, RandomMode, SeqKind, ThetaArgs};

pub const FORMATS_HELP: &str = "\
CSV columns:
  pangles          j,angle,cosine,sin_distance
  theta-auto       block,modulus,dim,kind,rho,phi,skew,case,theta1_block,method,theta1
  scan-resonance   rho,phi,case,theta1,theta1_min,skew,phi_c
  trajectory       name,value,n,anchor        (angle log: j,angle)
  random outer     value,stderr,n,reps
  random inner     n,mean,stderr,spread
  random all       name,value
  random-matrix    histogram: lo,hi,count    sorted: i,theta1
Floats carry 17 significant digits. Exit codes: 0 success, 2 input error,
3 numeric failure, 4 assumption violated without fallback.";

#[derive(Debug)]
pub enum CliError {
    Core(angval::Error),
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use angval::Error as E;
        match self {
            CliError::Input(_) => 2,
            CliError::Core(e) => match e {
                E::Parse { .. } | E::Io(_) | E::DimensionMismatch(_) | E::ParamRange(_) | E::RankDeficient { .. } => 2,
                E::EigencondViolated(_) => 4,
                _ => 3,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Input(m) => write!(f, "{m}"),
        }
    }
}

impl From<angval::Error> for CliError {
    fn from(e: angval::Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("ANGVAL_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Input(format!("ANGVAL_SEED is not an integer: {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Input(format!("--{name} must be positive, got {x}")))
    }
}

fn theta_options(t: &ThetaArgs) -> Result<ThetaOptions> {
    positive("tol-mod", t.tol_mod)?;
    Ok(ThetaOptions {
        q_max: t.qmax.max(1),
        rational_tol: positive("rational-tol", t.rational_tol)?,
        quad_tol: positive("quad-tol", t.quad_tol)?,
    })
}

fn auto_options(t: &ThetaArgs, seed: u64, fallback: bool) -> Result<AutoOptions> {
    Ok(AutoOptions { tol_mod: t.tol_mod, theta: theta_options(t)?, fallback, seed, ..Default::default() })
}

fn emit(common: &Common, text: &str) -> Result<()> {
    write_to(common.out.as_deref(), text)
}

fn write_to(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Runs the selected command; returns warnings for stderr.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.common.jobs {
        if j == 0 {
            return Err(CliError::Input("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<Vec<String>> {
    let common = &cli.common;
    let seed = resolve_seed(common.seed)?;
    match &cli.command {
        Command::Pangles { p, q } => pangles(common, p, q),
        Command::ThetaAuto { a, theta, no_fallback } => theta_auto(common, a, &auto_options(theta, seed, !no_fallback)?),
        Command::ScanResonance { rho, rho_steps, phi, phi_steps, theta } => {
            let rhos: Vec<f64> = match rho_steps {
                Some(0) => return Err(CliError::Input("--rho-steps must be positive".into())),
                Some(k) => (1..=*k).map(|i| i as f64 / *k as f64).collect(),
                None => rho.clone(),
            };
            let phis: Vec<f64> = match phi {
                Some(v) => v.clone(),
                None if *phi_steps == 0 => return Err(CliError::Input("--phi-steps must be positive".into())),
                None => (1..=*phi_steps).map(|i| FRAC_PI_2 * i as f64 / *phi_steps as f64).collect(),
            };
            scan_resonance(common, &rhos, &phis, &theta_options(theta)?)
        }
        Command::Trajectory { sequence, phi, phi0, phi1, henon_a, henon_b, transient, input, est, angle_log, log_out } => {
            let kind = match sequence {
                SeqKind::Rotation => BuiltinKind::Rotation { phi: *phi },
                SeqKind::Example1 => BuiltinKind::Example1 { phi0: *phi0, phi1: *phi1 },
                SeqKind::Example2 => BuiltinKind::Example2,
                SeqKind::Henon => BuiltinKind::Henon { a: *henon_a, b: *henon_b, transient: *transient },
                SeqKind::File => BuiltinKind::FromFile {
                    path: input.clone().ok_or_else(|| CliError::Input("`file` needs --input PATH".into()))?,
                },
            };
            let seq = builtin_sequence(&kind)?;
            let cfg = estimator_config(&seq, est, seed)?;
            trajectory(common, &seq, &cfg, *angle_log, log_out.as_deref())
        }
        Command::Random { driver, driver_json, mode, n, reps, v0, est } => {
            let text = match (driver, driver_json) {
                (Some(p), _) => std::fs::read_to_string(p)
                    .map_err(|e| CliError::Input(format!("cannot read {}: {e}", p.display())))?,
                (None, Some(s)) => s.clone(),
                (None, None) => return Err(CliError::Input("give --driver PATH or --driver-json".into())),
            };
            let driver = parse_driver(&text, common.seed)?;
            random(common, &driver, *mode, *n, *reps, v0.as_deref(), est)
        }
        Command::RandomMatrix { d, bins, table, theta } => {
            let opts = auto_options(theta, seed, true)?;
            let rep = random_matrix_experiment(*d, seed, *bins, &opts)?;
            random_matrix(common, &rep, *table)
        }
    }
}

fn read_frame(path: &Path, warnings: &mut Vec<String>) -> Result<Frame> {
    let m = read_matrix(path)?;
    if orthonormality_defect(&m) > 1e-10 {
        warnings.push(format!("{}: columns are not orthonormal; orthonormalized", path.display()));
    }
    Ok(Frame::new(&m)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanglesOutput {
    pub angles: Vec<f64>,
    pub cosines: Vec<f64>,
    /// `sin` of the largest angle.
    pub sin_distance: f64,
}

fn pangles(common: &Common, p: &Path, q: &Path) -> Result<Vec<String>> {
    let mut warnings = Vec::new();
    let pf = read_frame(p, &mut warnings)?;
    let qf = read_frame(q, &mut warnings)?;
    let set = principal_angles(&pf, &qf)?;
    let out = PanglesOutput { cosines: set.cosines(), sin_distance: set.max_angle().sin(), angles: set.angles };
    let text = match common.format {
        Format::Json => to_json(&out),
        Format::Csv => {
            let mut t = Table::new(&["j", "angle", "cosine", "sin_distance"]);
            for (j, (a, c)) in out.angles.iter().zip(&out.cosines).enumerate() {
                t.push(vec![(j + 1).into(), (*a).into(), (*c).into(), out.sin_distance.into()]);
            }
            t.to_csv()
        }
    };
    emit(common, &text)?;
    Ok(warnings)
}

fn theta_auto(common: &Common, a: &Path, opts: &AutoOptions) -> Result<Vec<String>> {
    let m = read_matrix(a)?;
    let rep = theta1_autonomous(&m, opts)?;
    let text = match common.format {
        Format::Json => to_json(&rep),
        Format::Csv => theta_auto_csv(&rep),
    };
    emit(common, &text)?;
    Ok(rep.warnings)
}

fn theta_auto_csv(rep: &AutoThetaReport) -> String {
    let mut t = Table::new(&[
        "block", "modulus", "dim", "kind", "rho", "phi", "skew", "case", "theta1_block", "method", "theta1",
    ]);
    for (i, b) in rep.blocks.iter().enumerate() {
        let method = match b.method {
            BlockMethod::Formula => "formula",
            BlockMethod::RealSpectrumZero => "real_spectrum",
            BlockMethod::TrajectoryFallback => "trajectory_fallback",
        };
        t.push(vec![
            i.into(),
            b.modulus.into(),
            b.dim.into(),
            format!("{:?}", b.kind).into(),
            b.normal_form.as_ref().map(|n| n.rho).into(),
            b.normal_form.as_ref().map(|n| n.phi).into(),
            b.skew.into(),
            b.case.map(|c| c.label()).unwrap_or_default().into(),
            b.theta1_block.into(),
            method.into(),
            rep.theta1.into(),
        ]);
    }
    t.to_csv()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub rho: f64,
    pub phi: f64,
    pub case: String,
    pub theta1: f64,
    pub theta1_min: Option<f64>,
    pub skew: f64,
    pub phi_c: f64,
}

fn scan_resonance(common: &Common, rhos: &[f64], phis: &[f64], opts: &ThetaOptions) -> Result<Vec<String>> {
    use rayon::prelude::*;
    if let Some(&p) = phis.iter().find(|&&p| !(p > 0.0 && p <= FRAC_PI_2)) {
        return Err(CliError::Input(format!("phi = {p} not in (0, pi/2]")));
    }
    let grid: Vec<(f64, f64)> = rhos.iter().flat_map(|&r| phis.iter().map(move |&p| (r, p))).collect();
    // Indexed parallel collect keeps grid order for any thread count.
    let rows: Vec<ScanRow> = grid
        .par_iter()
        .map(|&(rho, phi)| {
            let r = theta1_normal(rho, phi, opts)?;
            Ok(ScanRow {
                rho,
                phi,
                case: r.case.label(),
                theta1: r.theta1,
                theta1_min: r.theta1_min,
                skew: r.skew,
                phi_c: critical_phi(rho),
            })
        })
        .collect::<std::result::Result<_, angval::Error>>()?;
    let text = match common.format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut t = Table::new(&["rho", "phi", "case", "theta1", "theta1_min", "skew", "phi_c"]);
            for r in &rows {
                t.push(vec![
                    r.rho.into(),
                    r.phi.into(),
                    r.case.clone().into(),
                    r.theta1.into(),
                    r.theta1_min.into(),
                    r.skew.into(),
                    r.phi_c.into(),
                ]);
            }
            t.to_csv()
        }
    };
    emit(common, &text)?;
    Ok(Vec::new())
}

fn estimator_config(seq: &MatrixSequence, est: &EstimatorArgs, seed: u64) -> Result<EstimatorConfig> {
    let mut cfg = EstimatorConfig::suggested(seq);
    cfg.s = est.s;
    cfg.seed = seed;
    cfg.refine = !est.no_refine;
    if let Some(l) = &est.n_ladder {
        cfg.n_ladder = l.clone();
    }
    if let Some(k) = est.k_window {
        cfg.k_window = k;
    }
    if let Some(m) = est.frames {
        cfg.search = if (est.s, seq.dimension()) == (1, 2) {
            SearchStrategy::AngleGrid(m)
        } else {
            SearchStrategy::RandomFrames(m)
        };
    }
    cfg.validate(seq.dimension())?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutput {
    pub estimates: AngularEstimates,
    pub ordering_violations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_log: Option<Vec<f64>>,
}

fn trajectory(
    common: &Common,
    seq: &MatrixSequence,
    cfg: &EstimatorConfig,
    angle_log: Option<usize>,
    log_out: Option<&Path>,
) -> Result<Vec<String>> {
    let estimates = estimate_angular_values(seq, cfg)?;
    let ordering_violations = estimates.ordering_violations(1e-12);
    let log = match angle_log {
        Some(n) => {
            let idx: Vec<usize> = (0..cfg.s).collect();
            let v0 = Frame::coordinate(seq.dimension(), &idx)?;
            Some(orbit_angles(seq, &v0, n)?)
        }
        None => None,
    };
    if let (Some(path), Some(log)) = (log_out, &log) {
        let mut t = Table::new(&["j", "angle"]);
        for (j, b) in log.iter().enumerate() {
            t.push(vec![(j + 1).into(), (*b).into()]);
        }
        write_to(Some(path), &t.to_csv())?;
    }
    let text = match common.format {
        Format::Json => {
            let angle_log = if log_out.is_some() { None } else { log };
            to_json(&TrajectoryOutput { estimates: estimates.clone(), ordering_violations: ordering_violations.clone(), angle_log })
        }
        Format::Csv => {
            let mut t = Table::new(&["name", "value", "n", "anchor"]);
            let all = [
                ("inner_upper", &estimates.inner_upper),
                ("inner_lower", &estimates.inner_lower),
                ("outer_upper", &estimates.outer_upper),
                ("outer_lower", &estimates.outer_lower),
                ("uniform_inner_upper", &estimates.uniform_inner_upper),
                ("uniform_inner_lower", &estimates.uniform_inner_lower),
                ("uniform_outer_upper", &estimates.uniform_outer_upper),
                ("uniform_outer_lower", &estimates.uniform_outer_lower),
            ];
            for (name, e) in all {
                t.push(vec![
                    name.into(),
                    e.value.into(),
                    e.argmax.n.into(),
                    e.argmax.anchor.into(),
                ]);
            }
            t.to_csv()
        }
    };
    emit(common, &text)?;
    let mut warnings: Vec<String> = ordering_violations.iter().map(|v| format!("ordering violated: {v}")).collect();
    if matches!(cfg.search, SearchStrategy::RandomFrames(_)) || (cfg.s, seq.dimension()) != (1, 2) {
        warnings.push("values are lower bounds from a finite candidate search".into());
    }
    Ok(warnings)
}

/// Driver seed: `--seed`, then the document's `seed`, then ANGVAL_SEED, then 0.
fn parse_driver(text: &str, seed_flag: Option<u64>) -> Result<CocycleDriver> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("driver document: {e}")))?;
    let has_seed = value.get("seed").is_some();
    let mut driver: CocycleDriver =
        serde_json::from_value(value).map_err(|e| CliError::Input(format!("driver document: {e}")))?;
    if seed_flag.is_some() || !has_seed {
        driver.seed = resolve_seed(seed_flag)?;
    }
    driver.validate()?;
    Ok(driver)
}

fn random(
    common: &Common,
    driver: &CocycleDriver,
    mode: RandomMode,
    n: usize,
    reps: usize,
    v0: Option<&[f64]>,
    est: &EstimatorArgs,
) -> Result<Vec<String>> {
    let d = driver.dimension();
    let mut warnings = Vec::new();
    let text = match mode {
        RandomMode::Outer => {
            let frame = match v0 {
                Some(v) => {
                    if v.is_empty() || v.len() % d != 0 {
                        return Err(CliError::Input(format!("--v0 needs a multiple of {d} entries")));
                    }
                    Frame::new(&DMatrix::from_column_slice(d, v.len() / d, v))?
                }
                None => Frame::coordinate(d, &(0..est.s).collect::<Vec<_>>())?,
            };
            let e = birkhoff_outer(driver, &frame, n, reps)?;
            match common.format {
                Format::Json => to_json(&e),
                Format::Csv => {
                    let mut t = Table::new(&["value", "stderr", "n", "reps"]);
                    t.push(vec![e.value.into(), e.stderr.into(), e.n.into(), e.reps.into()]);
                    t.to_csv()
                }
            }
        }
        RandomMode::Inner | RandomMode::All => {
            let mut cfg = EstimatorConfig { s: est.s, seed: driver.seed, n_ladder: vec![n / 100, n / 10, n], ..Default::default() };
            cfg.n_ladder.retain(|&x| x > 0);
            cfg.n_ladder.dedup();
            if let Some(l) = &est.n_ladder {
                cfg.n_ladder = l.clone();
            }
            if let Some(m) = est.frames {
                cfg.search = if (est.s, d) == (1, 2) { SearchStrategy::AngleGrid(m) } else { SearchStrategy::RandomFrames(m) };
            }
            if mode == RandomMode::Inner {
                let e = inner_estimate(driver, &cfg, reps)?;
                match common.format {
                    Format::Json => to_json(&e),
                    Format::Csv => {
                        let mut t = Table::new(&["n", "mean", "stderr", "spread"]);
                        for p in &e.trace {
                            t.push(vec![p.n.into(), p.mean.into(), p.stderr.into(), p.spread.into()]);
                        }
                        t.to_csv()
                    }
                }
            } else {
                let e = random_angular_values(driver, &cfg, reps)?;
                warnings.push("uniform values use the extremes over replications; these only bound the essential extremes from inside".into());
                warnings.extend(e.ordering_violations(1e-12).into_iter().map(|v| format!("ordering violated: {v}")));
                match common.format {
                    Format::Json => to_json(&e),
                    Format::Csv => {
                        let mut t = Table::new(&["name", "value"]);
                        for (name, v) in [
                            ("inner", e.inner),
                            ("outer_upper", e.outer_upper),
                            ("outer_lower", e.outer_lower),
                            ("uniform_inner_upper", e.uniform_inner_upper),
                            ("uniform_inner_lower", e.uniform_inner_lower),
                            ("uniform_outer_upper", e.uniform_outer_upper),
                            ("uniform_outer_lower", e.uniform_outer_lower),
                        ] {
                            t.push(vec![name.into(), v.into()]);
                        }
                        t.to_csv()
                    }
                }
            }
        }
    };
    emit(common, &text)?;
    Ok(warnings)
}

fn random_matrix(common: &Common, rep: &RandomMatrixReport, table: MatrixTable) -> Result<Vec<String>> {
    let text = match common.format {
        Format::Json => to_json(rep),
        Format::Csv => match table {
            MatrixTable::Histogram => {
                let mut t = Table::new(&["lo", "hi", "count"]);
                for b in &rep.histogram {
                    t.push(vec![b.lo.into(), b.hi.into(), b.count.into()]);
                }
                t.to_csv()
            }
            MatrixTable::Sorted => {
                let mut t = Table::new(&["i", "theta1"]);
                for (i, v) in rep.sorted_values.iter().enumerate() {
                    t.push(vec![(i + 1).into(), (*v).into()]);
                }
                t.to_csv()
            }
        },
    };
    emit(common, &text)?;
    Ok(vec![format!("theta1 = {}, {} two-dimensional blocks", rep.theta1, rep.complex_blocks)])
}

