//! Per-step monitors and the registry that selects one by name.

mod adaptive;
mod binary;
mod fsft;
mod tracker;

use serde::{Deserialize, Serialize};

pub use adaptive::AdaptiveMonitor;
pub use binary::BinaryBaseline;
pub use fsft::FixedThresholdMonitor;
pub use tracker::ThresholdTracker;

use crate::config::EngineConfig;
use crate::domain::{Label, StreamSample, ThresholdGrid, UcbState};
use crate::error::{Error, Result};
use crate::estimators::{IdScoreSet, SortedOodScores};
use crate::runio::rng::SimRng;
use crate::scorefn::ScoringFunction;

/// Source of human labels.
pub trait LabelOracle {
    fn label(&mut self, sample: &StreamSample) -> Result<Label>;
}

impl<F> LabelOracle for F
where
    F: FnMut(&StreamSample) -> Result<Label>,
{
    fn label(&mut self, sample: &StreamSample) -> Result<Label> {
        self(sample)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateEvent {
    /// An update fired but produced no candidate.
    Attempted,
    Accepted,
    Rejected,
}

/// What a monitor did with one stream sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub t: u64,
    #[serde(with = "crate::runio::trace::ext_f64")]
    pub score: f64,
    pub predicted: Label,
    pub queried: bool,
    pub via_importance: bool,
    pub true_label: Option<Label>,
    /// Human label when queried, else the prediction.
    pub emitted: Label,
    #[serde(with = "crate::runio::trace::ext_f64")]
    pub threshold: f64,
    pub g_version: u64,
    pub update: Option<UpdateEvent>,
}

/// The detector currently deployed: predict ID iff `score > lambda`.
#[derive(Debug, Clone, Copy)]
pub struct Detector<'a> {
    pub scorer: &'a ScoringFunction,
    pub lambda: f64,
    pub version: u64,
}

/// Estimation state exposed for coverage audits.
#[derive(Debug, Clone, Copy)]
pub struct EstimationView<'a> {
    pub scores: &'a SortedOodScores,
    pub grid: &'a ThresholdGrid,
    pub psi: f64,
    pub ucb: UcbState,
}

pub trait Monitor: Send {
    fn method(&self) -> &'static str;

    fn step(&mut self, sample: &StreamSample, oracle: &mut dyn LabelOracle) -> Result<StepOutcome>;

    fn detector(&self) -> Detector<'_>;

    /// Counters behind the confidence width, for adaptive methods.
    fn ucb_state(&self) -> Option<UcbState> {
        None
    }

    /// Current width; `+inf` when the method keeps none.
    fn psi(&self) -> f64 {
        f64::INFINITY
    }

    fn estimation(&self) -> Option<EstimationView<'_>> {
        None
    }
}

/// Everything a monitor needs at construction.
#[derive(Debug, Clone)]
pub struct MonitorSetup {
    pub config: EngineConfig,
    /// Deployed before any update; fixed for FSAT and FSFT.
    pub initial_scorer: ScoringFunction,
    pub id_set: IdScoreSet,
    /// Initialization substream, already advanced past the draw of the ID set.
    pub init_rng: SimRng,
}

pub type MonitorFactory = fn(MonitorSetup) -> Result<Box<dyn Monitor>>;

/// Monitors registered by method name.
#[derive(Clone)]
pub struct MethodRegistry {
    entries: Vec<(&'static str, MonitorFactory)>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("asat", |s| Ok(Box::new(AdaptiveMonitor::asat(s)?)));
        r.register("fsat", |s| Ok(Box::new(AdaptiveMonitor::fsat(s)?)));
        r.register("fsft", |s| Ok(Box::new(FixedThresholdMonitor::new(s)?)));
        r.register("binary", |s| Ok(Box::new(BinaryBaseline::new(s)?)));
        r
    }

    /// Adds or replaces a method.
    pub fn register(&mut self, name: &'static str, factory: MonitorFactory) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = factory,
            None => self.entries.push((name, factory)),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| *n == name)
    }

    pub fn create(&self, name: &str, setup: MonitorSetup) -> Result<Box<dyn Monitor>> {
        let factory = self
            .entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, f)| *f)
            .ok_or_else(|| Error::UnknownName {
                kind: "method",
                name: name.to_string(),
                known: self.names().join(", "),
            })?;
        factory(setup)
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Query decision: always for predicted OOD, with probability `p` for
/// predicted ID. Returns `(queried, via_importance)`; the RNG is consumed
/// only for predicted ID.
pub fn should_query(predicted: Label, p: f64, rng: &mut SimRng) -> (bool, bool) {
    match predicted {
        Label::Ood => (true, false),
        Label::Id => {
            let q = rng.bernoulli(p);
            (q, q)
        }
    }
}

/// Strict comparison: ties are OOD.
pub fn predict(score: f64, lambda: f64) -> Label {
    if score > lambda {
        Label::Id
    } else {
        Label::Ood
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_predict_ood() {
        assert_eq!(predict(0.5, 0.5), Label::Ood);
        assert_eq!(predict(0.5, f64::INFINITY), Label::Ood);
        assert_eq!(predict(0.6, 0.5), Label::Id);
    }

    #[test]
    fn query_rule() {
        let mut rng = SimRng::new(1);
        assert_eq!(should_query(Label::Ood, 0.2, &mut rng), (true, false));
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| should_query(Label::Id, 0.2, &mut rng).0)
            .count();
        let se = (0.2 * 0.8 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.2).abs() < 3.0 * se);
    }

    #[test]
    fn registry_names() {
        let r = MethodRegistry::builtin();
        assert_eq!(r.names(), vec!["asat", "fsat", "fsft", "binary"]);
        assert!(r.contains("fsft"));
        assert!(!r.contains("oracle"));
    }
}
