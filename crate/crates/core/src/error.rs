use thiserror::Error;

use crate::solver::SolverReport;

#[derive(Debug, Error)]
pub enum PolaronError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("self-consistency did not converge after {} iterations (residual {:.3e})", .0.iterations, .0.final_residual)]
    NotConverged(SolverReport),

    #[error("scaling field `{0}` is undefined for a vanishing coupling")]
    UndefinedField(&'static str),

    #[error("scattering rate vanishes at k-index {0}; transport is degenerate")]
    DegenerateZeroScattering(usize),

    #[error("non-positive scattering rate {value:.3e} at k-index {index}")]
    NonPositiveRate { index: usize, value: f64 },

    #[error("truncated Fock space of dimension {0} exceeds the limit of {1}")]
    TooLarge(usize, usize),

    #[error("phonon cutoff not converged: change {0:.3e} exceeds tolerance {1:.3e}")]
    CutoffNotConverged(f64, f64),
}

pub type Result<T> = std::result::Result<T, PolaronError>;
