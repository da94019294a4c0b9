use thiserror::Error;

/// Errors raised anywhere in the precoding laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("subcarrier index {index} out of range 1..={count}")]
    SubcarrierIndex { index: usize, count: usize },

    #[error("angle out of domain: theta={theta}, phi={phi}")]
    AngleDomain { theta: f64, phi: f64 },

    #[error("MSIA target {0} cannot be placed inside the angle domains")]
    MsiaUnreachable(f64),

    #[error("Fisher information is singular (condition number {0:e})")]
    SingularFisher(f64),

    #[error("power allocation infeasible: thresholds need {required} but budget is {budget}")]
    Infeasible { required: f64, budget: f64 },

    #[error("no feasible point on the {0} grid")]
    NoFeasiblePoint(String),

    #[error("beamspace channel is identically zero")]
    ZeroChannel,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown scheme {0:?}")]
    UnknownScheme(String),

    #[error("malformed dataset: {0}")]
    Dataset(String),

    #[error("dataset schema version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
