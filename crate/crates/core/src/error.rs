use thiserror::Error;

use crate::sdp::SdpSolution;
use crate::sim::SimTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid simplex point: {0}")]
    InvalidSimplexPoint(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    /// The synthesis LMIs have no (strictly) feasible point. Carries the
    /// solver output, including the best phase-I margin attained.
    #[error("synthesis infeasible: {}", .0.summary())]
    SynthesisInfeasible(Box<SdpSolution>),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Non-finite or exploding state. The trace holds every sample up to
    /// (and excluding) the failing step.
    #[error("simulation diverged at t = {time}")]
    SimulationDiverged { time: f64, trace: Box<SimTrace> },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
