use thiserror::Error;

/// Invalid or inconsistent configuration.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("realistic weights require exactly 120 agents, got {0}")]
    RealisticAgentCount(usize),
    #[error("`{key}` has length {got}, expected {expected}")]
    Length { key: String, got: usize, expected: usize },
    #[error("i/o error reading `{path}`: {reason}")]
    Io { path: String, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { key: key.into(), reason: reason.into() }
    }
}

/// Errors from evaluating a reserve-price function.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriceError {
    /// The imbalance exceeds the reserve held in the merit ladder.
    #[error("reserve exhausted: imbalance {imbalance} exceeds capacity by {overshoot} MW")]
    Exhausted { imbalance: f64, overshoot: f64 },
    #[error("invalid merit ladder: {0}")]
    Ladder(String),
    #[error("integration failed: {0}")]
    Quadrature(String),
}

/// Domain errors of the analytic helpers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("all weights are zero")]
    ZeroWeights,
    #[error("saturated equilibrium: |A*| >= W, normalizer is zero")]
    Saturated,
    #[error("{0}")]
    Other(String),
}
