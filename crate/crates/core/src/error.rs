use thiserror::Error;

use crate::field::WaveIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {0:?} lies outside the truncation cube")]
    IndexOutOfRange(WaveIndex),
    #[error("velocity profile has nonzero mean {0:e}")]
    NonzeroMean(f64),
    #[error("mode {index:?} is not divergence free (relative defect {defect:e})")]
    NotDivergenceFree { index: WaveIndex, defect: f64 },
    #[error("coefficients at {index:?} break Hermitian symmetry (defect {defect:e})")]
    NotReal { index: WaveIndex, defect: f64 },
    #[error("invalid box period {0:?}: every period must be a positive integer")]
    InvalidBox([u64; 3]),
    #[error("no sampled direction gives a positive growth rate (best gamma {best_gamma:e})")]
    NoUnstableDirection { best_gamma: f64 },
    #[error("snapping xi to denominators <= {bound} leaves Re lambda = {re_lambda:e}")]
    SnapDestroyedGrowth { bound: u64, re_lambda: f64 },
    #[error("perturbed cell solve stalled at relative residual {residual:e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("dispersion root search failed after {iterations} iterations: {reason}")]
    NoConvergence {
        iterations: usize,
        reason: String,
        history: Vec<num_complex::Complex64>,
    },
    #[error("secant derivative of the dispersion function vanished at mu = {mu}")]
    DerivativeVanished { mu: num_complex::Complex64 },
    #[error(
        "no eigenvalue of the mean matrix within {tolerance:e} of lambda (closest {distance:e})"
    )]
    EigenvectorMismatch { distance: f64, tolerance: f64 },
    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    StabilityViolation { dt: f64, bound: f64 },
    #[error("non-finite value detected at t = {t}")]
    NanDetected { t: f64 },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("base flow truncation {cell:?} does not tile the box {box_periods:?}")]
    BoxMismatch {
        cell: [usize; 3],
        box_periods: [u64; 3],
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
