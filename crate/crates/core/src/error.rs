use thiserror::Error;

/// Errors raised by the learning, environment and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {what} = {index} (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("no valid action in state {state}: unreachable base-station configuration")]
    NoValidAction { state: usize },

    #[error("transition tensor is not row-stochastic: action {action}, state {state}, row sum {sum}")]
    NotStochastic { action: usize, state: usize, sum: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("coincident transmitters {0} and {1}")]
    CoincidentTransmitters(usize, usize),

    #[error("grid has {cells} cells but {needed} entities must be placed")]
    GridTooSmall { cells: usize, needed: usize },

    #[error("empty search window")]
    EmptyWindow,

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("joint space too large: {0}")]
    JointSpaceTooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
