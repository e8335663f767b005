use thiserror::Error;

use crate::graph::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(ValidationReport),

    #[error("graph parse error: {0}")]
    Parse(String),

    #[error("length mismatch: expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("{name} = {value} is outside {range}")]
    ExponentOutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },

    #[error("smallest eigenvalue {value:e} is not zero relative to the spectral radius {lambda_max:e}")]
    GroundStateNotZero { value: f64, lambda_max: f64 },

    #[error("heat kernel evaluated at negative time {0}")]
    NegativeTime(f64),

    #[error("fractional kernel entry W({x},{y}) = {value:e} is not positive")]
    PositivityViolation { x: usize, y: usize, value: f64 },

    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),

    #[error("gamma function evaluated outside (0, 2): {0}")]
    DomainError(f64),

    #[error("state value u[{vertex}] = {value:e} is not positive")]
    NonPositiveState { vertex: usize, value: f64 },

    #[error("step size {dt:e} underflowed at t = {t}")]
    StepSizeUnderflow { t: f64, dt: f64 },

    #[error("maximum principle violated by {excess:e} at t = {t}, vertex {vertex}")]
    BoundViolation { t: f64, vertex: usize, excess: f64 },

    #[error("Picard iteration did not converge after {iterations} iterations (last distance {last:e})")]
    PicardNotConverged {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },
}

impl Error {
    /// Short stable identifier, used in machine-readable summaries.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidGraph(_) => "InvalidGraph",
            Error::Parse(_) => "Parse",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::ExponentOutOfRange { .. } => "ExponentOutOfRange",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::GroundStateNotZero { .. } => "GroundStateNotZero",
            Error::NegativeTime(_) => "NegativeTime",
            Error::PositivityViolation { .. } => "PositivityViolation",
            Error::QuadratureNotConverged(_) => "QuadratureNotConverged",
            Error::DomainError(_) => "DomainError",
            Error::NonPositiveState { .. } => "NonPositiveState",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::BoundViolation { .. } => "BoundViolation",
            Error::PicardNotConverged { .. } => "PicardNotConverged",
        }
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}

pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::ExponentOutOfRange {
            name,
            value,
            range: "(0, 1)",
        })
    }
}
