//! Synthetic streams, the label oracle and ground-truth evaluation.
//!
//! The engine never sees `gamma` or the component parameters; it only
//! receives samples and oracle labels.

pub mod distribution;
pub mod scenarios;
pub mod stream;
pub mod truth;

pub use distribution::{ComponentDistribution, Gaussian};
pub use scenarios::{preset, preset_scenarios, scenario_names, Scenario};
pub use stream::{OodPhase, SimOracle, StreamGenerator, StreamSpec};
pub use truth::{true_fpr, true_tpr, Estimate, TruthEvaluator};
