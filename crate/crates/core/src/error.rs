//! Error types shared across the library.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum GridError {
    #[error("expected a {expected} grid, got a {got} grid")]
    WrongSpace { expected: &'static str, got: &'static str },
    #[error("grid is invalid: {0}")]
    Invalid(String),
    #[error("grid too small: boundary mass {mass:.3e} exceeds threshold {threshold:.3e}")]
    TooSmall { mass: f64, threshold: f64 },
    #[error("degenerate non-decaying chord grid (boundary magnitude {boundary:.3e} vs max {max:.3e})")]
    DegenerateChord { boundary: f64, max: f64 },
    #[error("state specification invalid: {0}")]
    BadState(String),
}

#[derive(Error, Debug)]
pub enum FlowError {
    #[error("trajectory diverged at t = {t}: non-finite state")]
    Diverged { t: f64 },
    #[error("operation requires a quadratic Hamiltonian, got {got}")]
    NonQuadratic { got: &'static str },
    #[error("negative duration {t} not allowed here")]
    NegativeTime { t: f64 },
}

#[derive(Error, Debug)]
pub enum EvolveError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("accuracy loss: {0}")]
    Accuracy(String),
    #[error("time {t} outside the bundle range [0, {t_max}]")]
    OutsideBundle { t: f64, t_max: f64 },
}

#[derive(Error, Debug)]
pub enum OracleError {
    #[error("Hamiltonian is not representable polynomially in the Fock oracle")]
    NonPolynomial,
    #[error("truncation leak: top-level occupation {occupation:.3e} exceeds guard {guard:.3e} at t = {t}")]
    TruncationLeak { occupation: f64, guard: f64, t: f64 },
    #[error("oracle supports N = 1 only, got N = {modes}")]
    UnsupportedModes { modes: usize },
    #[error("oracle self-check failed: {0}")]
    Inconsistent(String),
    #[error("density matrix invalid: {0}")]
    BadDensity(String),
}

#[derive(Error, Debug)]
pub enum IoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed file: {0}")]
    Format(String),
}
