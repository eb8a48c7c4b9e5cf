use thiserror::Error;

use crate::market::MarketError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Market(#[from] MarketError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// An internal invariant or a caller contract was broken.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("instance too large for exhaustive search: {agents} agents (limit {limit})")]
    SizeGuard { agents: usize, limit: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Contract violations map to exit code 2, everything else to 1.
    pub fn is_contract_violation(&self) -> bool {
        matches!(self, Error::Contract(_))
    }
}
