use crate::domain::StreamSample;
use crate::engine::{predict, Detector, LabelOracle, Monitor, MonitorSetup, StepOutcome};
use crate::error::Result;
use crate::scorefn::train::alpha_threshold;
use crate::scorefn::ScoringFunction;

/// Share of ID scores kept above the fixed threshold.
pub const FSFT_TPR: f64 = 0.95;

/// Fixed scorer, fixed threshold at 95% ID acceptance. Never queries.
pub struct FixedThresholdMonitor {
    g: ScoringFunction,
    lambda: f64,
}

impl FixedThresholdMonitor {
    pub fn new(setup: MonitorSetup) -> Result<Self> {
        let scores = setup.id_set.scores(&setup.initial_scorer)?;
        let lambda = alpha_threshold(&scores, FSFT_TPR).unwrap_or(f64::INFINITY);
        Ok(Self {
            g: setup.initial_scorer,
            lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Monitor for FixedThresholdMonitor {
    fn method(&self) -> &'static str {
        "fsft"
    }

    fn step(&mut self, sample: &StreamSample, _oracle: &mut dyn LabelOracle) -> Result<StepOutcome> {
        let score = self.g.score(&sample.x)?;
        let predicted = predict(score, self.lambda);
        Ok(StepOutcome {
            t: sample.t,
            score,
            predicted,
            queried: false,
            via_importance: false,
            true_label: None,
            emitted: predicted,
            threshold: self.lambda,
            g_version: 1,
            update: None,
        })
    }

    fn detector(&self) -> Detector<'_> {
        Detector {
            scorer: &self.g,
            lambda: self.lambda,
            version: 1,
        }
    }
}
