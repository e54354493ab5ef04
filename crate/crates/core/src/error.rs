use thiserror::Error;

/// Errors produced by model construction, design, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown hypothesis index {index} (model has {k} hypotheses)")]
    UnknownHypothesis { index: usize, k: usize },

    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: u8, alphabet: usize },

    #[error("stage {stage} exceeds the model horizon {horizon}")]
    BeyondHorizon { stage: usize, horizon: usize },

    #[error("state kind does not match the model: {0}")]
    StateMismatch(String),

    #[error("state-space cap exceeded: {states} states needed, cap is {cap}")]
    StateCapExceeded { states: u128, cap: usize },

    #[error(
        "underflow guard: horizon {horizon} with minimum pmf {min_pmf:e} \
         implies densities below 1e-280"
    )]
    UnderflowGuard { horizon: usize, min_pmf: f64 },

    #[error("enumeration cap exceeded: {histories} histories needed, cap is {cap}")]
    EnumerationCapExceeded { histories: u128, cap: u128 },

    #[error("problem is not truncatable: {0}")]
    NotTruncatable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
