//! Streaming OOD monitoring with adaptive scoring functions, adaptive
//! thresholds and anytime false-positive-rate control.

pub mod confidence;
pub mod config;
pub mod domain;
pub mod error;
pub mod engine;
pub mod estimators;
pub mod experiment;
pub mod metrics;
pub mod scorefn;
pub mod sim;
pub mod runio;
pub mod threshold;

pub use error::{Error, Result};
