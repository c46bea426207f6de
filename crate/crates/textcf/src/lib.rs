//! Benchmark toolkit for counterfactual explanations of binary text
//! classifiers: five generation methods (gradient beam search, candidate-pool
//! search with substitution-value estimates, a controlled generator adapter,
//! and two chat-prompted variants) evaluated with validity, sparsity, and
//! plausibility metrics under bootstrap confidence intervals.

pub mod data;
pub mod error;
pub mod gateway;
pub mod metrics;
pub mod search;

pub use error::{Error, Result};
pub use search::{CounterfactualResult, Method, SearchConfig};
