use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("unsupported perturbation mode: {0}")]
    UnsupportedMode(String),
    #[error("step size underflow at t = {t}")]
    Stiffness { t: f64 },
    #[error("integration diverged at t = {t}")]
    Divergence { t: f64 },
    #[error("orbit captured: no section crossing within {max_time} time units")]
    OrbitCaptured { max_time: f64 },
    #[error("degenerate equilibrium: {0}")]
    DegenerateEquilibrium(String),
    #[error("point not on section (residual {residual:e})")]
    NotOnSection { residual: f64 },
    #[error("leaf coordinate {u} outside the calibrated range")]
    OutOfFoliation { u: f64 },
    #[error("section is not calibrated")]
    Uncalibrated,
    #[error("map evaluated at critical point {0}")]
    CriticalPoint(f64),
    #[error("{x} outside map domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error("conjugation parameters rejected: {0}")]
    ConjugationParams(String),
    #[error("unreliable fit: {dropped} of {total} transversal points dropped")]
    UnreliableFit { dropped: usize, total: usize },
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("partition mismatch: {0}")]
    PartitionMismatch(String),
    #[error("io: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
