use num_complex::Complex64;
use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("coefficient at degree {degree} violates the twist parity")]
    TwistViolation { degree: i32 },
    #[error("loop is singular on the sample circle (min |det| = {min_det:e})")]
    SingularLoop { min_det: f64 },
    #[error("factorization did not converge (residual {residual:e})")]
    ConvergenceFailure { residual: f64 },
    #[error("loop lies outside the big cell (condition number {condition:e})")]
    OutsideBigCell { condition: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported map: {0}")]
    UnsupportedMap(String),
    #[error("integration path to {target} passes within the pole margin of {pole}")]
    PoleOnPath { pole: Complex64, target: Complex64 },
    #[error("integrator step size underflow near {at}")]
    StepSizeUnderflow { at: Complex64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("automorphism leaves the sampled region for {fraction:.0}% of nodes", fraction = .fraction * 100.0)]
    OutOfDomain { fraction: f64 },
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("all grid nodes are singular")]
    AllNodesSingular,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
