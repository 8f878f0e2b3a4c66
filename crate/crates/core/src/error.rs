use thiserror::Error;

use crate::control::ControlPulse;

/// Errors produced by gate synthesis, channel analysis, and simulation.
#[derive(Debug, Error)]
pub enum MixError {
    #[error("size mismatch in {context}: expected {expected}, got {actual}")]
    SizeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("matrix logarithm branch cut: {0}")]
    BranchCut(String),

    /// A weight solver ran out of iterations. Carries the best iterate found.
    #[error("solver did not converge after {iterations} iterations (objective {objective:.3e})")]
    SolverConvergence {
        iterations: usize,
        objective: f64,
        weights: Vec<f64>,
    },

    /// Pulse optimization stopped below the fidelity floor. Carries the best pulse.
    #[error("pulse optimization stalled at fidelity {fidelity} (floor {floor})")]
    PulseConvergence {
        fidelity: f64,
        floor: f64,
        pulse: Box<ControlPulse>,
    },

    #[error("infeasible program: {0}")]
    Infeasible(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

pub type Result<T, E = MixError> = std::result::Result<T, E>;

impl MixError {
    pub fn size(context: &'static str, expected: usize, actual: usize) -> Self {
        MixError::SizeMismatch {
            context,
            expected,
            actual,
        }
    }
}
