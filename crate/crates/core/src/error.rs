use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capacity error: {n_atoms} atoms need {states} basis states (budget {budget})")]
    Capacity { n_atoms: usize, states: u128, budget: usize },
    #[error("integrator step size underflow at t = {t} us")]
    StepUnderflow { t: f64 },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("imaging calibration infeasible: {0}")]
    Calibration(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("empty statistics: {0}")]
    EmptyStatistics(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed record file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
