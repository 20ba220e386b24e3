use serde::Serialize;
use thiserror::Error;

/// Failures raised by the simulation library.
///
/// Payloads are stored as f64 regardless of the scalar type so that the
/// error stays `'static` and serializable.
#[derive(Debug, Clone, PartialEq, Error, Serialize)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("topology mismatch: {0}")]
    Topology(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("integrator exceeded {steps} steps at t = {t}")]
    MaxStepsExceeded { steps: usize, t: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("drift matrix is not Hurwitz; offending eigenvalues {eigenvalues:?}")]
    NotHurwitz { eigenvalues: Vec<(f64, f64)> },

    #[error("singular linear system: {0}")]
    Singular(&'static str),

    #[error("non-physical state: {0}")]
    NonPhysical(String),

    #[error("trace did not settle: terminal window varies by {variation:e} (tolerance {rel_tol:e})")]
    NotConverged { variation: f64, rel_tol: f64 },

    #[error("negative spectral value {value:e} at omega = {omega}")]
    NegativeSpectrum { omega: f64, value: f64 },

    #[error("peaks unresolvable: separation {separation:e} below half-width sum {half_widths:e}")]
    UnresolvablePeaks { separation: f64, half_widths: f64 },

    #[error("least-squares fit failed: {0}")]
    Fit(String),

    #[error("empty or malformed grid: {0}")]
    Grid(String),
}

impl Error {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Topology(_) => "topology",
            Error::Config(_) => "config",
            Error::StepSizeUnderflow { .. } => "step_size_underflow",
            Error::MaxStepsExceeded { .. } => "max_steps_exceeded",
            Error::NoConvergence { .. } => "no_convergence",
            Error::NotHurwitz { .. } => "not_hurwitz",
            Error::Singular(_) => "singular",
            Error::NonPhysical(_) => "non_physical",
            Error::NotConverged { .. } => "not_converged",
            Error::NegativeSpectrum { .. } => "negative_spectrum",
            Error::UnresolvablePeaks { .. } => "unresolvable_peaks",
            Error::Fit(_) => "fit",
            Error::Grid(_) => "grid",
        }
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. } | Error::Topology(_) | Error::Config(_) | Error::Grid(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
