use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration or numerical parameter is invalid.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    Iteration { iterations: usize, residual: f64 },

    #[error("growth-rate estimation failed: {0}")]
    EstimationFailed(String),

    #[error("invalid eigendata: {0}")]
    InvalidEigendata(String),

    /// The population outgrew the configured cap. The simulation state is left
    /// at the last event processed before the cap was hit.
    #[error("population cap {cap} reached at t = {time}")]
    PopulationCap { cap: usize, time: f64 },

    #[error("empty population: {0}")]
    EmptyPopulation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
