mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "angval", version, about = "Angular values of linear dynamical systems", after_help = commands::FORMATS_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// RNG seed; falls back to ANGVAL_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct ThetaArgs {
    /// Relative tolerance for grouping eigenvalues by modulus.
    #[arg(long, default_value_t = angval::spectral::DEFAULT_TOL_MOD)]
    pub tol_mod: f64,
    /// Largest denominator tried when classifying φ/π as rational.
    #[arg(long, default_value_t = 1000)]
    pub qmax: u64,
    /// Tolerance on |φ/π − p/q| for the rational classification.
    #[arg(long, default_value_t = 1e-9)]
    pub rational_tol: f64,
    /// Quadrature tolerance for the irrational case.
    #[arg(long, default_value_t = 1e-10)]
    pub quad_tol: f64,
}

#[derive(Args, Debug, Clone)]
pub struct EstimatorArgs {
    /// Subspace dimension.
    #[arg(long, default_value_t = 1)]
    pub s: usize,
    /// Horizons, comma separated and increasing.
    #[arg(long, value_delimiter = ',')]
    pub n_ladder: Option<Vec<usize>>,
    /// Largest start offset K for the uniform values.
    #[arg(long)]
    pub k_window: Option<usize>,
    /// Number of candidate subspaces (angle grid for lines in the plane, random frames otherwise).
    #[arg(long)]
    pub frames: Option<usize>,
    /// Skip local refinement of the best candidates.
    #[arg(long)]
    pub no_refine: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqKind {
    Rotation,
    Example1,
    Example2,
    Henon,
    File,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomMode {
    /// Birkhoff average along one initial subspace.
    Outer,
    /// Average over replications of the best subspace per path.
    Inner,
    /// All seven random-system values.
    All,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixTable {
    Histogram,
    Sorted,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Principal angles between the column spaces of two matrices.
    Pangles { p: PathBuf, q: PathBuf },
    /// First angular value of a matrix, block by block.
    ThetaAuto {
        a: PathBuf,
        #[command(flatten)]
        theta: ThetaArgs,
        /// Fail on blocks without a closed form instead of estimating them.
        #[arg(long)]
        no_fallback: bool,
    },
    /// θ₁ of the normal form over a grid of rotation angles.
    ScanResonance {
        /// Contractions ρ in (0, 1], comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0.14285714285714285")]
        rho: Vec<f64>,
        /// Use ρ = k/K for k = 1..=K instead of --rho.
        #[arg(long)]
        rho_steps: Option<usize>,
        /// Explicit φ values in (0, π/2], comma separated.
        #[arg(long, value_delimiter = ',')]
        phi: Option<Vec<f64>>,
        /// Use φ = (π/2)·i/N for i = 1..=N.
        #[arg(long, default_value_t = 400)]
        phi_steps: usize,
        #[command(flatten)]
        theta: ThetaArgs,
    },
    /// Finite-horizon estimates of the eight angular values of a sequence.
    Trajectory {
        sequence: SeqKind,
        #[arg(long, default_value_t = 0.7)]
        phi: f64,
        #[arg(long, default_value_t = 0.3)]
        phi0: f64,
        #[arg(long, default_value_t = 1.2)]
        phi1: f64,
        #[arg(long, default_value_t = 1.4)]
        henon_a: f64,
        #[arg(long, default_value_t = 0.3)]
        henon_b: f64,
        #[arg(long, default_value_t = 1000)]
        transient: usize,
        /// Matrix file for `file`: one matrix is repeated, several are cycled.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        est: EstimatorArgs,
        /// Record this many angles b_1, b_2, … along the first coordinate subspace.
        #[arg(long)]
        angle_log: Option<usize>,
        /// Write the angle log as CSV here (it is part of the JSON output otherwise).
        #[arg(long)]
        log_out: Option<PathBuf>,
    },
    /// Estimates for a random cocycle given as a JSON driver document.
    Random {
        /// Driver file.
        #[arg(long, conflicts_with = "driver_json")]
        driver: Option<PathBuf>,
        /// Driver document inline.
        #[arg(long)]
        driver_json: Option<String>,
        #[arg(long, value_enum, default_value_t = RandomMode::Outer)]
        mode: RandomMode,
        /// Horizon for the outer mode.
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        reps: usize,
        /// Initial subspace for the outer mode, comma separated columns of length d.
        #[arg(long, value_delimiter = ',')]
        v0: Option<Vec<f64>>,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// θ₁ of a d × d matrix with uniform(0, 1) entries.
    RandomMatrix {
        #[arg(long, default_value_t = 100)]
        d: usize,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Table emitted in CSV mode.
        #[arg(long, value_enum, default_value_t = MatrixTable::Histogram)]
        table: MatrixTable,
        #[command(flatten)]
        theta: ThetaArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
