use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix has rank {rank} but {cols} independent columns are required")]
    RankDeficient { rank: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("brute-force oracle would need {evaluations} evaluations (limit 1e8)")]
    OracleTooLarge { evaluations: f64 },
    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    EigenFailure { iterations: usize },
    #[error("spectral radius is zero")]
    ZeroSpectralRadius,
    #[error("parameter out of range: {0}")]
    ParamRange(String),
    #[error("block does not have a complex-conjugate eigenvalue pair")]
    NotComplexPair,
    #[error("matrix is singular (smallest eigenvalue modulus {min_modulus:e})")]
    SingularMatrix { min_modulus: f64 },
    #[error("skewness {skew} is at most 1, so delta has no negative region")]
    NoNegativeRegion { skew: f64 },
    #[error("eigenvalue condition violated and fallback disabled: {0}")]
    EigencondViolated(String),
    #[error("sequence matrix at index {0} fails the invertibility guard")]
    SequenceSingular(usize),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
