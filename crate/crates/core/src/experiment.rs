//! Seeded end-to-end runs: stream, monitor, oracle, truth evaluation and
//! metrics, plus batch execution and aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{validate_config, EngineConfig, Seeds};
use crate::domain::Label;
use crate::engine::{MethodRegistry, Monitor, MonitorSetup, UpdateEvent};
use crate::error::{Error, Result};
use crate::estimators::IdScoreSet;
use crate::metrics::{violation_report, EvalWindow, LabelSource, PhaseViolation, PrefixCounts};
use crate::runio::rng::SimRng;
use crate::runio::trace::{
    config_hash, Checkpoint, CoverageAudit, RunSummary, StepRecord, Trace, TraceHeader,
};
use crate::scorefn::train::{alpha_threshold, fit_offline_reference, P2Settings};
use crate::scorefn::{BaselineScorer, ScoringFunction};
use crate::sim::scenarios::preset;
use crate::sim::truth::DEFAULT_N_MC;
use crate::sim::{SimOracle, StreamSpec, TruthEvaluator};

/// Everything that determines a run apart from the method.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub master_seed: u64,
    pub scenario: Option<String>,
    pub engine: EngineConfig,
    pub stream: StreamSpec,
    pub baseline: BaselineScorer,
    pub n_id: usize,
    pub n_mc: usize,
    pub label_source: LabelSource,
    /// Stream description from a config file, when not a preset.
    pub stream_source: Option<serde_json::Value>,
    hash: String,
}

#[derive(Serialize)]
struct HashView<'a> {
    master_seed: u64,
    scenario: &'a Option<String>,
    stream_source: &'a Option<serde_json::Value>,
    gamma: f64,
    horizon: u64,
    n_id: usize,
    n_mc: usize,
    label_source: LabelSource,
    engine: &'a EngineConfig,
}

impl RunConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        master_seed: u64,
        scenario: Option<String>,
        engine: EngineConfig,
        stream: StreamSpec,
        baseline: BaselineScorer,
        n_id: usize,
        n_mc: usize,
        label_source: LabelSource,
        stream_source: Option<serde_json::Value>,
    ) -> Result<Self> {
        let mut cfg = Self {
            master_seed,
            scenario,
            engine,
            stream,
            baseline,
            n_id,
            n_mc,
            label_source,
            stream_source,
            hash: String::new(),
        };
        cfg.reseed(master_seed)?;
        Ok(cfg)
    }

    /// A built-in scenario with default engine settings.
    pub fn from_scenario(name: &str, master_seed: u64) -> Result<Self> {
        let sc = preset(name, 0)?;
        let engine = EngineConfig {
            update_schedule: sc.update_schedule,
            est_window: sc.est_window,
            eval_window: sc.eval_window,
            ..EngineConfig::default()
        };
        Self::new(
            master_seed,
            Some(sc.name.to_string()),
            engine,
            sc.stream,
            sc.baseline,
            sc.n_id,
            DEFAULT_N_MC,
            LabelSource::default(),
            None,
        )
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Re-derives all seeds from a new master seed.
    pub fn reseed(&mut self, master_seed: u64) -> Result<()> {
        self.master_seed = master_seed;
        self.engine.seeds = Seeds::from_master(master_seed);
        self.stream.seed = self.engine.seeds.stream;
        self.refresh()
    }

    pub fn with_seed(&self, master_seed: u64) -> Result<Self> {
        let mut c = self.clone();
        c.reseed(master_seed)?;
        Ok(c)
    }

    /// Applies `f`, then revalidates and rehashes.
    pub fn modified(&self, f: impl FnOnce(&mut Self)) -> Result<Self> {
        let mut c = self.clone();
        f(&mut c);
        c.stream.seed = c.engine.seeds.stream;
        c.refresh()?;
        Ok(c)
    }

    fn refresh(&mut self) -> Result<()> {
        self.engine = validate_config(self.engine.clone())?;
        self.stream = self.stream.clone().validate()?;
        if self.n_id == 0 {
            return Err(Error::config("n_id must be positive"));
        }
        if self.n_mc == 0 {
            return Err(Error::config("n_mc must be positive"));
        }
        self.hash = config_hash(&HashView {
            master_seed: self.master_seed,
            scenario: &self.scenario,
            stream_source: &self.stream_source,
            gamma: self.stream.gamma,
            horizon: self.stream.horizon,
            n_id: self.n_id,
            n_mc: self.n_mc,
            label_source: self.label_source,
            engine: &self.engine,
        });
        Ok(())
    }

    pub fn eval_window(&self) -> EvalWindow {
        EvalWindow::from_option(self.engine.eval_window)
    }

    /// Draws the initial ID set from the init substream and returns the
    /// monitor setup.
    pub fn monitor_setup(&self) -> Result<MonitorSetup> {
        let mut init_rng = SimRng::new(self.engine.seeds.init);
        let ids = (0..self.n_id)
            .map(|_| self.stream.id_dist.sample(&mut init_rng))
            .collect();
        Ok(MonitorSetup {
            config: self.engine.clone(),
            initial_scorer: self.baseline.clone().into(),
            id_set: IdScoreSet::new(ids)?,
            init_rng,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Regular checkpoint spacing in steps.
    pub checkpoint_every: u64,
    /// Compare `sup |fpr_hat - FPR|` over the grid against the width at
    /// every buffer change once the width is valid.
    pub audit_coverage: bool,
    /// Keep per-step records in the returned trace.
    pub keep_steps: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            checkpoint_every: 1000,
            audit_coverage: false,
            keep_steps: true,
        }
    }
}

/// Truth and evaluation state at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub t: u64,
    pub phase: usize,
    pub true_fpr: f64,
    pub true_fpr_se: f64,
    pub true_tpr: f64,
    pub psi: f64,
    pub lambda: f64,
    pub g_version: u64,
    pub labeled_ood: u64,
    pub eval_fpr: Option<f64>,
    pub eval_tpr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Trace,
    pub checkpoints: Vec<CheckpointRow>,
}

impl RunResult {
    pub fn summary(&self) -> &RunSummary {
        &self.trace.summary
    }
}

fn audit(
    monitor: &dyn Monitor,
    evaluator: &mut TruthEvaluator,
    phase: usize,
) -> Result<Option<f64>> {
    let Some(view) = monitor.estimation() else {
        return Ok(None);
    };
    if !view.ucb.t0_reached || !view.psi.is_finite() {
        return Ok(None);
    }
    let lambdas: Vec<f64> = view.grid.values().collect();
    let truth = evaluator.exceedance_curve(&monitor.detector(), phase + 1, &lambdas)?;
    let mut sup: f64 = 0.0;
    for (l, t) in lambdas.iter().zip(&truth) {
        if let Some(f) = view.scores.fpr_hat(*l) {
            sup = sup.max((f - t.value).abs());
        }
    }
    Ok(Some(sup))
}

/// Runs `method` on `cfg` from step 1 to the horizon.
pub fn run_single(
    cfg: &RunConfig,
    method: &str,
    registry: &MethodRegistry,
    opts: &RunOptions,
) -> Result<RunResult> {
    let mut monitor = registry.create(method, cfg.monitor_setup()?)?;
    let mut evaluator = TruthEvaluator::new(&cfg.stream, cfg.n_mc, cfg.engine.seeds.evaluation);
    let mut oracle = SimOracle::default();
    let mut counts = PrefixCounts::new(cfg.label_source);
    let window = cfg.eval_window();
    let phase_starts: Vec<u64> = cfg.stream.ood_phases.iter().map(|p| p.start).collect();

    let mut steps = Vec::new();
    let mut rows: Vec<CheckpointRow> = Vec::new();
    let mut last_detector = (f64::NAN, 0u64);
    let mut labeled_ood = 0u64;
    let mut t0_step = None;
    let mut first_update_step = None;
    let (mut accepted, mut rejected) = (0u64, 0u64);
    let mut coverage = opts.audit_coverage.then(|| CoverageAudit {
        checks: 0,
        max_error: 0.0,
        exceeded: false,
        first_exceedance: None,
    });

    for sample in cfg.stream.generator() {
        let t = sample.t;
        let out = monitor.step(&sample, &mut oracle)?;
        counts.push(&out, sample.y_true);
        if out.true_label == Some(Label::Ood) {
            labeled_ood += 1;
        }
        match out.update {
            Some(UpdateEvent::Accepted) => {
                accepted += 1;
                first_update_step.get_or_insert(t);
            }
            Some(UpdateEvent::Rejected) => rejected += 1,
            _ => {}
        }
        let ucb = monitor.ucb_state();
        if t0_step.is_none() && ucb.is_some_and(|u| u.t0_reached) {
            t0_step = Some(t);
        }
        let phase = cfg.stream.phase_at(t);

        if let Some(cov) = coverage.as_mut() {
            if out.true_label == Some(Label::Ood) {
                if let Some(sup) = audit(monitor.as_ref(), &mut evaluator, phase)? {
                    cov.checks += 1;
                    cov.max_error = cov.max_error.max(sup);
                    if sup > monitor.psi() && !cov.exceeded {
                        cov.exceeded = true;
                        cov.first_exceedance = Some(t);
                    }
                }
            }
        }

        let det = monitor.detector();
        let changed = det.lambda.to_bits() != last_detector.0.to_bits() || det.version != last_detector.1;
        let checkpoint = if changed
            || t % opts.checkpoint_every.max(1) == 0
            || phase_starts.contains(&t)
            || t == cfg.stream.horizon
        {
            last_detector = (det.lambda, det.version);
            let fpr = evaluator.fpr(&det, phase)?;
            let tpr = evaluator.tpr(&det)?;
            let c = counts.window(t, window);
            let row = CheckpointRow {
                t,
                phase,
                true_fpr: fpr.value,
                true_fpr_se: fpr.std_error,
                true_tpr: tpr.value,
                psi: monitor.psi(),
                lambda: det.lambda,
                g_version: det.version,
                labeled_ood,
                eval_fpr: c.fpr(),
                eval_tpr: c.tpr(),
            };
            let cp = Checkpoint {
                true_fpr: row.true_fpr,
                true_tpr: row.true_tpr,
                psi: row.psi,
                lambda: row.lambda,
                labeled_ood,
                eval_fpr: row.eval_fpr,
                eval_tpr: row.eval_tpr,
            };
            rows.push(row);
            Some(cp)
        } else {
            None
        };
        if opts.keep_steps {
            steps.push(StepRecord {
                outcome: out,
                checkpoint,
            });
        }
    }

    let horizon = cfg.stream.horizon;
    let has_width = monitor.ucb_state().is_some();
    let audit_from = if has_width { t0_step } else { Some(1) };
    let curve: Vec<(u64, f64)> = rows.iter().map(|r| (r.t, r.true_fpr)).collect();
    let max_true_fpr_after_t0 = audit_from.map_or(0.0, |from| {
        rows.iter()
            .filter(|r| r.t >= from)
            .map(|r| r.true_fpr)
            .fold(0.0, f64::max)
    });
    let last = rows.last().expect("the horizon is always a checkpoint");
    let fin = counts.window(horizon, window);
    let header = TraceHeader {
        method: method.to_string(),
        scenario: cfg.scenario.clone(),
        master_seed: cfg.master_seed,
        seeds: cfg.engine.seeds,
        config_hash: cfg.hash().to_string(),
        horizon,
    };
    let summary = RunSummary {
        method: method.to_string(),
        scenario: cfg.scenario.clone(),
        master_seed: cfg.master_seed,
        seeds: cfg.engine.seeds,
        config_hash: cfg.hash().to_string(),
        horizon,
        final_eval_fpr: fin.fpr(),
        final_eval_tpr: fin.tpr(),
        final_true_fpr: last.true_fpr,
        final_true_tpr: last.true_tpr,
        t0_step,
        first_update_step,
        max_true_fpr_after_t0,
        violations: violation_report(&curve, cfg.engine.alpha, audit_from, &phase_starts),
        labeled_ood,
        queries: oracle.queries,
        updates_accepted: accepted,
        updates_rejected: rejected,
        coverage,
    };
    Ok(RunResult {
        trace: Trace {
            header,
            steps,
            summary,
        },
        checkpoints: rows,
    })
}

/// One run of a batch.
#[derive(Debug, Clone)]
pub struct Job {
    pub config: RunConfig,
    pub method: String,
}

/// Runs jobs on the rayon pool; results keep the job order.
pub fn run_batch(jobs: &[Job], registry: &MethodRegistry, opts: &RunOptions) -> Vec<Result<RunResult>> {
    jobs.par_iter()
        .map(|j| run_single(&j.config, &j.method, registry, opts))
        .collect()
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Across-seed statistics for one method at one regular checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub t: u64,
    pub runs: usize,
    pub true_fpr_mean: f64,
    pub true_fpr_std: f64,
    pub true_tpr_mean: f64,
    pub true_tpr_std: f64,
    pub eval_fpr_mean: f64,
    pub eval_fpr_std: f64,
    pub eval_tpr_mean: f64,
    pub eval_tpr_std: f64,
}

/// Aggregates the regular checkpoints (multiples of `every` and the
/// horizon) of runs grouped by method, sorted by `(method, t)`.
pub fn aggregate(results: &[&RunResult], every: u64) -> Vec<AggregateRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, u64), Vec<&CheckpointRow>> = BTreeMap::new();
    for r in results {
        let horizon = r.trace.header.horizon;
        for row in &r.checkpoints {
            if row.t % every.max(1) == 0 || row.t == horizon {
                groups
                    .entry((r.trace.header.method.clone(), row.t))
                    .or_default()
                    .push(row);
            }
        }
    }
    groups
        .into_iter()
        .map(|((method, t), rows)| {
            let col = |f: &dyn Fn(&CheckpointRow) -> Option<f64>| {
                let v: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
                mean_std(&v)
            };
            let (true_fpr_mean, true_fpr_std) = col(&|r| Some(r.true_fpr));
            let (true_tpr_mean, true_tpr_std) = col(&|r| Some(r.true_tpr));
            let (eval_fpr_mean, eval_fpr_std) = col(&|r| r.eval_fpr);
            let (eval_tpr_mean, eval_tpr_std) = col(&|r| r.eval_tpr);
            AggregateRow {
                method,
                t,
                runs: rows.len(),
                true_fpr_mean,
                true_fpr_std,
                true_tpr_mean,
                true_tpr_std,
                eval_fpr_mean,
                eval_fpr_std,
                eval_tpr_mean,
                eval_tpr_std,
            }
        })
        .collect()
}

/// Best-achievable and fixed-scorer TPRs at FPR `alpha` for one OOD phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLine {
    pub phase: usize,
    pub phase_start: u64,
    /// Offline network fitted on i.i.d. pools, thresholded at population FPR `alpha`.
    pub tpr_star: f64,
    /// Initial scorer thresholded at population FPR `alpha`.
    pub fixed_scorer_tpr: f64,
}

/// Threshold at which `g` has population FPR `alpha` on `phase`, and the
/// resulting TPR.
pub fn tpr_at_alpha(
    g: &ScoringFunction,
    cfg: &RunConfig,
    evaluator: &mut TruthEvaluator,
    version: u64,
    phase: usize,
) -> Result<(f64, f64)> {
    let alpha = cfg.engine.alpha;
    let dist = &cfg.stream.ood_phases[phase].dist;
    let lambda = match g.as_linear() {
        Some(w) if dist.linear_exceedance(w, 0.0).is_some() => {
            let f = |l: f64| dist.linear_exceedance(w, l).unwrap_or(0.0);
            let (mut lo, mut hi) = (-1.0f64, 1.0f64);
            while f(lo) < alpha {
                lo *= 2.0;
            }
            while f(hi) > alpha {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > alpha {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        }
        _ => {
            let mut rng = SimRng::new(cfg.engine.seeds.evaluation ^ 0xA5A5_A5A5);
            let n = cfg.n_mc;
            let mut x = Vec::with_capacity(dist.dim());
            let mut scores = Vec::with_capacity(n);
            for _ in 0..n {
                x.clear();
                dist.sample_into(&mut rng, &mut x);
                scores.push(g.score_slice(&x)?);
            }
            alpha_threshold(&scores, alpha).ok_or(Error::EmptyBuffer)?
        }
    };
    let det = crate::engine::Detector {
        scorer: g,
        lambda,
        version,
    };
    Ok((lambda, evaluator.tpr(&det)?.value))
}

/// Reference lines per OOD phase; the offline fit uses pools of `n_pool`
/// i.i.d. draws per class.
pub fn reference_lines(cfg: &RunConfig, n_pool: usize) -> Result<Vec<ReferenceLine>> {
    let mut evaluator = TruthEvaluator::new(&cfg.stream, cfg.n_mc, cfg.engine.seeds.evaluation);
    let baseline: ScoringFunction = cfg.baseline.clone().into();
    let settings = P2Settings {
        beta: cfg.engine.beta,
        kappa: cfg.engine.kappa,
        optimizer: cfg.engine.optimizer,
    };
    let mut out = Vec::new();
    for (phase, p) in cfg.stream.ood_phases.iter().enumerate() {
        let mut rng = SimRng::new(cfg.engine.seeds.init ^ (0x5EED_0000 + phase as u64));
        let mut draw = |d: &crate::sim::ComponentDistribution| -> Vec<Vec<f64>> {
            (0..n_pool)
                .map(|_| {
                    let mut v = Vec::with_capacity(d.dim());
                    d.sample_into(&mut rng, &mut v);
                    v
                })
                .collect()
        };
        let id_pool = draw(&cfg.stream.id_dist);
        let ood_pool = draw(&p.dist);
        let ids: Vec<&[f64]> = id_pool.iter().map(|v| v.as_slice()).collect();
        let oods: Vec<&[f64]> = ood_pool.iter().map(|v| v.as_slice()).collect();
        let fit = fit_offline_reference(&ids, &oods, &settings, cfg.engine.alpha, &mut rng)?;
        let g_star: ScoringFunction = fit.g_star.into();
        let (_, tpr_star) = tpr_at_alpha(&g_star, cfg, &mut evaluator, u64::MAX - phase as u64, phase)?;
        let (_, fixed) = tpr_at_alpha(&baseline, cfg, &mut evaluator, u64::MAX - 1000, phase)?;
        out.push(ReferenceLine {
            phase,
            phase_start: p.start,
            tpr_star,
            fixed_scorer_tpr: fixed,
        });
    }
    Ok(out)
}

/// Labeled OOD samples gathered between the start of a phase and its
/// recovery checkpoint.
pub fn recovery_labeled_ood(result: &RunResult, violation: &PhaseViolation) -> Option<u64> {
    let rec = violation.recovery_step?;
    let at = |t: u64| {
        result
            .checkpoints
            .iter()
            .find(|c| c.t >= t)
            .map(|c| c.labeled_ood)
    };
    Some(at(rec)? - at(violation.phase_start)?)
}
