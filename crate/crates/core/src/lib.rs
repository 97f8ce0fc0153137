//! Intention-aware policy graphs.
//!
//! Build a frequentist policy graph from discretised observations of an
//! agent, register hypothesised desires, propagate intention values, and
//! answer *what*, *how* and *why* questions about the agent's behaviour.

pub mod envs;
pub mod error;
pub mod explain;
pub mod graph;
pub mod intention;
pub mod metrics;
pub mod predicate;
pub mod report;
pub mod revision;
pub mod trajectory;

pub use error::{Error, Result};
