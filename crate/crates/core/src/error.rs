use thiserror::Error;

use crate::ode::IntegrationError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate spectrum: gap {gap:e} below threshold {threshold:e}")]
    Degenerate { gap: f64, threshold: f64 },

    #[error("singular point: {0}")]
    Singular(String),

    #[error("integration failed: {0}")]
    Integration(#[from] IntegrationError),

    #[error("norm drift {drift:e} exceeds limit {limit:e}")]
    NormDrift { drift: f64, limit: f64 },

    #[error("mode k = {k}: {source}")]
    Mode { k: f64, source: Box<Error> },

    #[error("system too large for the spin oracle: N = {n_sites} exceeds cap {cap}")]
    TooLarge { n_sites: usize, cap: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn at_mode(self, k: f64) -> Self {
        Error::Mode {
            k,
            source: Box::new(self),
        }
    }
}
