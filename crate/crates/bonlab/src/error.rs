use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDist(String),
    #[error("outcome {0} is not in the support")]
    UnknownOutcome(u64),
    #[error("target puts mass {mass} on outcome {id} where the base has none")]
    Domination { id: u64, mass: f64 },
    #[error("conditioning set has zero mass")]
    EmptyConditioning,
    #[error("invalid reward table: {0}")]
    InvalidReward(String),
    #[error("invalid parameter `{field}`: {reason}")]
    Param { field: String, reason: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::Param { field: field.to_string(), reason: reason.into() }
    }
}
