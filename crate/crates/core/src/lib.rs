//! Deterministic federated linear probing on frozen features.

pub mod config;
pub mod error;
pub mod fed;
pub mod feature_store;
pub mod heads;
pub mod metrics;
pub mod noise;
pub mod optimizer;
pub mod partition;
pub mod runner;
pub mod seeding;

pub use error::{Error, Result};
