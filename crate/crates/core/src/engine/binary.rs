use crate::config::EngineConfig;
use crate::domain::{Label, StreamSample};
use crate::engine::{predict, Detector, LabelOracle, Monitor, MonitorSetup, StepOutcome, UpdateEvent};
use crate::error::Result;
use crate::runio::rng::SimRng;
use crate::scorefn::{train_classifier, BinaryClassifier, ScoringFunction};

/// Two-logit classifier trained with cross-entropy on queried samples.
/// Queries only predicted-OOD samples and predicts OOD until trained.
pub struct BinaryBaseline {
    cfg: EngineConfig,
    scorer: ScoringFunction,
    lambda: f64,
    version: u64,
    model: Option<BinaryClassifier>,
    pool_x: Vec<Vec<f64>>,
    pool_y: Vec<Label>,
    train_rng: SimRng,
    dim: usize,
    delta_ood: u64,
    attempts: u64,
}

impl BinaryBaseline {
    pub fn new(setup: MonitorSetup) -> Result<Self> {
        let cfg = crate::config::validate_config(setup.config)?;
        let dim = setup.id_set.features()[0].dim();
        Ok(Self {
            cfg,
            scorer: setup.initial_scorer,
            lambda: f64::INFINITY,
            version: 1,
            model: None,
            pool_x: Vec::new(),
            pool_y: Vec::new(),
            train_rng: setup.init_rng,
            dim,
            delta_ood: 0,
            attempts: 0,
        })
    }

    pub fn pool_sizes(&self) -> (usize, usize) {
        let ood = self.pool_y.iter().filter(|y| **y == Label::Ood).count();
        (self.pool_y.len() - ood, ood)
    }

    fn update(&mut self) -> Result<UpdateEvent> {
        self.attempts += 1;
        self.delta_ood = 0;
        let opt = self.cfg.optimizer;
        let init = match (&self.model, opt.warm_start) {
            (Some(m), true) => m.clone(),
            _ => BinaryClassifier::random(self.dim, opt.hidden, &mut self.train_rng),
        };
        let xs: Vec<&[f64]> = self.pool_x.iter().map(|v| v.as_slice()).collect();
        let (model, _) = train_classifier(init, &xs, &self.pool_y, &opt, &mut self.train_rng)?;
        self.scorer = ScoringFunction::Classifier(model.clone());
        self.model = Some(model);
        self.lambda = 0.0;
        self.version += 1;
        Ok(UpdateEvent::Accepted)
    }
}

impl Monitor for BinaryBaseline {
    fn method(&self) -> &'static str {
        "binary"
    }

    fn step(&mut self, sample: &StreamSample, oracle: &mut dyn LabelOracle) -> Result<StepOutcome> {
        let score = self.scorer.score(&sample.x)?;
        let threshold = self.lambda;
        let g_version = self.version;
        let predicted = predict(score, threshold);
        let queried = predicted == Label::Ood;
        let mut true_label = None;
        if queried {
            let y = oracle.label(sample)?;
            true_label = Some(y);
            self.pool_x.push(sample.x.values().to_vec());
            self.pool_y.push(y);
            if y == Label::Ood {
                self.delta_ood += 1;
            }
        }
        let mut update = None;
        if self.delta_ood >= self.cfg.update_schedule.omega(self.attempts) {
            update = Some(self.update()?);
        }
        Ok(StepOutcome {
            t: sample.t,
            score,
            predicted,
            queried,
            via_importance: false,
            true_label,
            emitted: true_label.unwrap_or(predicted),
            threshold,
            g_version,
            update,
        })
    }

    fn detector(&self) -> Detector<'_> {
        Detector {
            scorer: &self.scorer,
            lambda: self.lambda,
            version: self.version,
        }
    }
}
