//! Shared error type for the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller handed us something out of contract (empty text, bad index, n too large).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A required model backend is not loaded or not reachable.
    #[error("gateway unavailable: {0}")]
    GatewayUnavailable(String),

    /// The backend cannot provide a capability a method needs (e.g. gradients
    /// from a non-differentiable backend). Methods treat this as "inapplicable".
    #[error("capability missing: {0}")]
    Capability(String),

    /// Credential or configuration required for an operation is absent.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// Upstream service failed after retries were exhausted.
    #[error("upstream unavailable: {0}")]
    UpstreamUnavailable(String),

    /// A generator response could not be reduced to a usable counterfactual.
    #[error("malformed output: {0}")]
    MalformedOutput(String),

    /// Dataset files missing or unreadable; message names the expected path.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    /// True when the whole method should be skipped rather than a single
    /// example marked failed.
    pub fn is_method_inapplicable(&self) -> bool {
        matches!(self, Error::Capability(_) | Error::GatewayUnavailable(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
