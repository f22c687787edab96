//! Secure federated gradient-boosted decision trees.

pub mod cli;
pub mod counters;
pub mod dataset;
pub mod error;
pub mod federation;
pub mod gbdt;
pub mod he;
pub mod inference;
pub mod processor;
pub mod synthetic;

pub use error::{Error, Result};
