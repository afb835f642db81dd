use crate::confidence::{dkw_interval, make_bound};
use crate::config::{EngineConfig, HeuristicConstants};
use crate::domain::{Label, LabeledOodRecord, StreamSample, UcbState};
use crate::engine::{
    predict, should_query, Detector, EstimationView, LabelOracle, Monitor, MonitorSetup, StepOutcome,
    ThresholdTracker, UpdateEvent,
};
use crate::error::Result;
use crate::estimators::{tpr_hat_scores, IdScoreSet};
use crate::runio::rng::SimRng;
use crate::scorefn::train::{accepts, optimize_p2, weighted_quantile, P2Data, P2Settings};
use crate::scorefn::{ScoringFunction, TwoLayerScorer};

/// Adaptive threshold, with (ASAT) or without (FSAT) scorer updates.
pub struct AdaptiveMonitor {
    name: &'static str,
    adapt: bool,
    cfg: EngineConfig,
    g: ScoringFunction,
    ids: IdScoreSet,
    tracker: ThresholdTracker,
    imp_rng: SimRng,
    train_rng: SimRng,
    delta_ood: u64,
    attempts: u64,
    last_trace: Vec<f64>,
}

impl AdaptiveMonitor {
    pub fn asat(setup: MonitorSetup) -> Result<Self> {
        Self::build("asat", true, HeuristicConstants::ASAT, setup)
    }

    pub fn fsat(setup: MonitorSetup) -> Result<Self> {
        Self::build("fsat", false, HeuristicConstants::FSAT, setup)
    }

    fn build(
        name: &'static str,
        adapt: bool,
        default_constants: HeuristicConstants,
        setup: MonitorSetup,
    ) -> Result<Self> {
        let cfg = crate::config::validate_config(setup.config)?;
        let constants = cfg.heuristic.unwrap_or(default_constants);
        let bound = make_bound(cfg.ucb_mode.name(), cfg.delta, constants)?;
        let tracker = ThresholdTracker::new(
            &setup.initial_scorer,
            &setup.id_set,
            cfg.est_window,
            cfg.grid,
            bound,
            cfg.p,
            cfg.delta,
            cfg.alpha,
        )?;
        Ok(Self {
            name,
            adapt,
            imp_rng: SimRng::new(cfg.seeds.importance),
            train_rng: setup.init_rng,
            cfg,
            g: setup.initial_scorer,
            ids: setup.id_set,
            tracker,
            delta_ood: 0,
            attempts: 0,
            last_trace: Vec::new(),
        })
    }

    pub fn tracker(&self) -> &ThresholdTracker {
        &self.tracker
    }

    /// Per-epoch loss of the most recent optimization run.
    pub fn last_loss_trace(&self) -> &[f64] {
        &self.last_trace
    }

    pub fn update_attempts(&self) -> u64 {
        self.attempts
    }

    fn update(&mut self) -> Result<UpdateEvent> {
        self.attempts += 1;
        self.delta_ood = 0;
        let opt = self.cfg.optimizer;
        let dim = self.ids.features()[0].dim();
        let (init, warm) = match (&self.g, opt.warm_start) {
            (ScoringFunction::Network(n), true) => (n.clone(), true),
            _ => (TwoLayerScorer::random(dim, opt.hidden, &mut self.train_rng), false),
        };

        let buffer = self.tracker.buffer();
        let ood: Vec<&[f64]> = buffer.records().map(|r| r.x.values()).collect();
        let weights = buffer.weights();
        let id_x: Vec<&[f64]> = self.ids.features().iter().map(|x| x.values()).collect();
        let lambda0 = if warm && self.tracker.lambda().is_finite() {
            self.tracker.lambda()
        } else {
            let scores: Vec<f64> = ood.iter().map(|x| init.score_slice(x)).collect();
            match weighted_quantile(&scores, &weights, 1.0 - self.cfg.alpha) {
                Some(l) => l,
                None => return Ok(UpdateEvent::Attempted),
            }
        };
        let settings = P2Settings {
            beta: self.cfg.beta,
            kappa: self.cfg.kappa,
            optimizer: opt,
        };
        let out = optimize_p2(
            init,
            lambda0,
            P2Data {
                ood: &ood,
                ood_weights: &weights,
                ids: &id_x,
            },
            &settings,
            &mut self.train_rng,
        )?;
        self.last_trace = out.trace;

        // The optimizer's threshold is discarded; Q1 picks the safe one.
        let candidate = ScoringFunction::Network(out.g);
        let (view, sol, psi) = self.tracker.evaluate_candidate(&candidate, &self.ids)?;
        let zeta = dkw_interval(self.cfg.dkw_delta, self.ids.len());
        let tpr_new = tpr_hat_scores(&view.id_scores, sol.lambda)?;
        let tpr_old = tpr_hat_scores(&self.tracker.view().id_scores, self.tracker.lambda())?;
        if accepts(tpr_new, tpr_old, zeta) {
            self.tracker.adopt(view, sol, psi);
            self.g = candidate;
            Ok(UpdateEvent::Accepted)
        } else {
            self.tracker.resolve();
            Ok(UpdateEvent::Rejected)
        }
    }
}

impl Monitor for AdaptiveMonitor {
    fn method(&self) -> &'static str {
        self.name
    }

    fn step(&mut self, sample: &StreamSample, oracle: &mut dyn LabelOracle) -> Result<StepOutcome> {
        let score = self.g.score(&sample.x)?;
        let threshold = self.tracker.lambda();
        let g_version = self.tracker.u_t();
        let predicted = predict(score, threshold);
        let (queried, via_importance) = should_query(predicted, self.cfg.p, &mut self.imp_rng);
        let mut true_label = None;
        let mut changed = false;
        if queried {
            let y = oracle.label(sample)?;
            true_label = Some(y);
            if y == Label::Ood {
                let rec = LabeledOodRecord::new(sample.t, sample.x.clone(), via_importance, self.cfg.p);
                self.tracker.push(rec, &self.g)?;
                self.delta_ood += 1;
                changed = true;
            }
        }
        let mut update = None;
        if self.adapt && self.delta_ood >= self.cfg.update_schedule.omega(self.attempts) {
            update = Some(self.update()?);
        } else if changed {
            self.tracker.resolve();
        }
        Ok(StepOutcome {
            t: sample.t,
            score,
            predicted,
            queried,
            via_importance,
            true_label,
            emitted: true_label.unwrap_or(predicted),
            threshold,
            g_version,
            update,
        })
    }

    fn detector(&self) -> Detector<'_> {
        Detector {
            scorer: &self.g,
            lambda: self.tracker.lambda(),
            version: self.tracker.u_t(),
        }
    }

    fn ucb_state(&self) -> Option<UcbState> {
        Some(self.tracker.ucb_state())
    }

    fn psi(&self) -> f64 {
        self.tracker.psi()
    }

    fn estimation(&self) -> Option<EstimationView<'_>> {
        let view = self.tracker.view();
        Some(EstimationView {
            scores: &view.sorted,
            grid: &view.grid,
            psi: self.tracker.psi(),
            ucb: self.tracker.ucb_state(),
        })
    }
}
