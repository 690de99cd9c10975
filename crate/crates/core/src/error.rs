use thiserror::Error;

use crate::biology::Species;

pub type Result<T> = std::result::Result<T, Error>;

/// Stage of a time step in which a negativity violation was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepPhase {
    Diffusion,
    Transformation,
    Coupled,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid network: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("network has no nodes")]
    EmptyNetwork,

    #[error("no water-filled ball to place mass in")]
    NoWater,

    #[error("requested {requested} bacterial spots but only {available} water-filled balls exist")]
    TooManySpots { requested: usize, available: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("non-finite value encountered in iteration {iteration}")]
    NonFiniteEncountered { iteration: usize },

    #[error("negativity of {species:?} ({negativity:e}) exceeds threshold (total {total:e}) during {phase:?}")]
    BacktrackRequired {
        phase: StepPhase,
        species: Species,
        negativity: f64,
        total: f64,
    },

    #[error("mass reallocation of {species:?} would overdraw node {node}")]
    RepairOverdraw { species: Species, node: usize },

    #[error("time step collapsed after {backtracks} halvings at t = {time_days} days")]
    StepCollapse { backtracks: usize, time_days: f64 },

    #[error("profile has zero norm")]
    ZeroProfile,

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that a smaller time step can cure.
    pub fn needs_smaller_step(&self) -> bool {
        matches!(self, Error::BacktrackRequired { .. } | Error::RepairOverdraw { .. })
    }

    pub fn phase(&self) -> Option<StepPhase> {
        match self {
            Error::BacktrackRequired { phase, .. } => Some(*phase),
            _ => None,
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SolverDivergence { .. }
                | Error::NonFiniteEncountered { .. }
                | Error::StepCollapse { .. }
                | Error::BacktrackRequired { .. }
                | Error::RepairOverdraw { .. }
        )
    }
}
