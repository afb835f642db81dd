//! Engine configuration and its validation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::ThresholdGrid;
use crate::error::{Error, Result};

/// Which confidence width feeds the threshold solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UcbMode {
    Theoretical,
    Heuristic,
}

impl UcbMode {
    pub fn name(self) -> &'static str {
        match self {
            UcbMode::Theoretical => "theoretical",
            UcbMode::Heuristic => "heuristic",
        }
    }
}

impl fmt::Display for UcbMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UcbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theoretical" => Ok(UcbMode::Theoretical),
            "heuristic" => Ok(UcbMode::Heuristic),
            other => Err(Error::UnknownName {
                kind: "ucb mode",
                name: other.to_string(),
                known: "theoretical, heuristic".to_string(),
            }),
        }
    }
}

/// Constants `c1, c2, c3` of the heuristic width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeuristicConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl HeuristicConstants {
    pub const ASAT: Self = Self {
        c1: 0.65,
        c2: 0.75,
        c3: 1.0,
    };
    pub const FSAT: Self = Self {
        c1: 0.5,
        c2: 0.75,
        c3: 1.0,
    };
}

/// `count` updates each triggered by `every` new labeled OOD samples.
/// A segment without a count repeats forever.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSegment {
    pub every: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
}

/// Sequence of optimization frequencies indexed by update attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UpdateSchedule {
    pub segments: Vec<ScheduleSegment>,
}

impl UpdateSchedule {
    /// 100 for the first 2k labeled OOD, 500 for the next 10k, 1000 after.
    pub fn stationary() -> Self {
        Self {
            segments: vec![
                ScheduleSegment {
                    every: 100,
                    count: Some(20),
                },
                ScheduleSegment {
                    every: 500,
                    count: Some(20),
                },
                ScheduleSegment {
                    every: 1000,
                    count: None,
                },
            ],
        }
    }

    /// 100 for the first 2k labeled OOD, 500 after.
    pub fn nonstationary() -> Self {
        Self {
            segments: vec![
                ScheduleSegment {
                    every: 100,
                    count: Some(20),
                },
                ScheduleSegment {
                    every: 500,
                    count: None,
                },
            ],
        }
    }

    pub fn constant(every: u64) -> Self {
        Self {
            segments: vec![ScheduleSegment { every, count: None }],
        }
    }

    /// Frequency for the `attempt`-th update (0-based). Past the last
    /// finite segment the final frequency repeats.
    pub fn omega(&self, attempt: u64) -> u64 {
        let mut remaining = attempt;
        for seg in &self.segments {
            match seg.count {
                Some(c) if remaining >= c => remaining -= c,
                _ => return seg.every,
            }
        }
        self.segments.last().map_or(1, |s| s.every)
    }
}

/// How the threshold grid is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// A fixed grid, shared by every scorer.
    Fixed {
        lambda_min: f64,
        lambda_max: f64,
        eta: f64,
    },
    /// Recomputed for each deployed scorer from its ID score quantiles.
    IdQuantiles { points: usize },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::IdQuantiles { points: 1001 }
    }
}

impl GridSpec {
    /// Resolves the grid for a scorer whose ID scores are `id_scores`.
    pub fn resolve(&self, id_scores: &[f64]) -> Result<ThresholdGrid> {
        match *self {
            GridSpec::Fixed {
                lambda_min,
                lambda_max,
                eta,
            } => ThresholdGrid::new(lambda_min, lambda_max, eta),
            GridSpec::IdQuantiles { points } => ThresholdGrid::from_id_scores(id_scores, points),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub lr_g: f64,
    pub lr_lambda: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    /// Warm-start each update from the incumbent network.
    pub warm_start: bool,
    /// Epochs used when fitting the offline reference scorer.
    pub reference_epochs: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            lr_g: 1e-4,
            lr_lambda: 0.01,
            weight_decay: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 20,
            batch_size: 128,
            hidden: 64,
            warm_start: true,
            reference_epochs: 60,
        }
    }
}

/// Independent RNG seeds, derived from one master seed by fixed offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub stream: u64,
    pub importance: u64,
    pub init: u64,
    pub evaluation: u64,
}

impl Seeds {
    pub const STREAM_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

    pub fn from_master(master: u64) -> Self {
        let k = |i: u64| master.wrapping_add(i.wrapping_mul(Self::STREAM_OFFSET));
        Self {
            stream: k(1),
            importance: k(2),
            init: k(3),
            evaluation: k(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub alpha: f64,
    pub p: f64,
    /// Failure probability for the FPR width and the t0 condition.
    pub delta: f64,
    /// Failure probability for the model-selection interval.
    pub dkw_delta: f64,
    pub beta: f64,
    pub kappa: f64,
    pub grid: GridSpec,
    pub update_schedule: UpdateSchedule,
    /// Cap on labeled OOD records used for estimation.
    pub est_window: Option<usize>,
    /// Span of past steps counted by the evaluation metrics.
    pub eval_window: Option<u64>,
    pub ucb_mode: UcbMode,
    /// Heuristic constants; `None` picks the per-method defaults.
    pub heuristic: Option<HeuristicConstants>,
    pub optimizer: OptimizerSettings,
    pub seeds: Seeds,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            p: 0.2,
            delta: 0.05,
            dkw_delta: 0.05,
            beta: 1.5,
            kappa: 50.0,
            grid: GridSpec::default(),
            update_schedule: UpdateSchedule::stationary(),
            est_window: None,
            eval_window: None,
            ucb_mode: UcbMode::Heuristic,
            heuristic: None,
            optimizer: OptimizerSettings::default(),
            seeds: Seeds::from_master(0),
        }
    }
}

fn open_unit(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// Returns `cfg` unchanged when every field is in range, else an error
/// naming the first bad field.
pub fn validate_config(cfg: EngineConfig) -> Result<EngineConfig> {
    if !open_unit(cfg.alpha) {
        return Err(Error::config("alpha must lie in (0,1)"));
    }
    if !(cfg.p > 0.0 && cfg.p <= 1.0) {
        return Err(Error::config("p must lie in (0,1]"));
    }
    if !open_unit(cfg.delta) {
        return Err(Error::config("delta must lie in (0,1)"));
    }
    if !open_unit(cfg.dkw_delta) {
        return Err(Error::config("dkw_delta must lie in (0,1)"));
    }
    if !(cfg.beta.is_finite() && cfg.beta >= 0.0) {
        return Err(Error::config("beta must be finite and nonnegative"));
    }
    if !positive(cfg.kappa) {
        return Err(Error::config("kappa must be positive"));
    }
    match cfg.grid {
        GridSpec::Fixed {
            lambda_min,
            lambda_max,
            eta,
        } => {
            ThresholdGrid::new(lambda_min, lambda_max, eta)?;
        }
        GridSpec::IdQuantiles { points } => {
            if points < 2 {
                return Err(Error::config("grid must hold at least two thresholds"));
            }
        }
    }
    if cfg.update_schedule.segments.is_empty() {
        return Err(Error::config("update_schedule must not be empty"));
    }
    if cfg.update_schedule.segments.iter().any(|s| s.every == 0) {
        return Err(Error::config("update_schedule frequencies must be at least 1"));
    }
    if cfg.update_schedule.segments.iter().any(|s| s.count == Some(0)) {
        return Err(Error::config("update_schedule counts must be at least 1"));
    }
    if cfg.est_window == Some(0) {
        return Err(Error::config("est_window must be positive"));
    }
    if cfg.eval_window == Some(0) {
        return Err(Error::config("eval_window must be positive"));
    }
    if let Some(h) = cfg.heuristic {
        if !(positive(h.c1) && positive(h.c2) && positive(h.c3)) {
            return Err(Error::config("heuristic constants must be positive"));
        }
    }
    let o = &cfg.optimizer;
    if !positive(o.lr_g) || !positive(o.lr_lambda) {
        return Err(Error::config("learning rates must be positive"));
    }
    if !(o.weight_decay.is_finite() && o.weight_decay >= 0.0) {
        return Err(Error::config("weight_decay must be nonnegative"));
    }
    if !(o.adam_beta1 >= 0.0 && o.adam_beta1 < 1.0 && o.adam_beta2 >= 0.0 && o.adam_beta2 < 1.0) {
        return Err(Error::config("adam betas must lie in [0,1)"));
    }
    if !positive(o.adam_eps) {
        return Err(Error::config("adam_eps must be positive"));
    }
    if o.batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    if o.hidden == 0 {
        return Err(Error::config("hidden width must be positive"));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(cfg: EngineConfig) -> String {
        validate_config(cfg).unwrap_err().to_string()
    }

    #[test]
    fn defaults_accepted() {
        let cfg = EngineConfig::default();
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.p, 0.2);
        assert_eq!(cfg.kappa, 50.0);
        assert_eq!(validate_config(cfg.clone()).unwrap(), cfg);
    }

    #[test]
    fn p_zero_rejected() {
        let cfg = EngineConfig {
            p: 0.0,
            ..Default::default()
        };
        assert!(msg(cfg).contains("p must lie in (0,1]"));
        let cfg = EngineConfig {
            p: 1.0,
            ..Default::default()
        };
        assert!(validate_config(cfg).is_ok());
    }

    #[test]
    fn zero_eta_rejected() {
        let cfg = EngineConfig {
            grid: GridSpec::Fixed {
                lambda_min: 0.0,
                lambda_max: 1.0,
                eta: 0.0,
            },
            ..Default::default()
        };
        assert!(msg(cfg).contains("grid step must be positive"));
    }

    #[test]
    fn kappa_and_schedule_checked() {
        let cfg = EngineConfig {
            kappa: 0.0,
            ..Default::default()
        };
        assert!(msg(cfg).contains("kappa"));
        let cfg = EngineConfig {
            update_schedule: UpdateSchedule::constant(0),
            ..Default::default()
        };
        assert!(msg(cfg).contains("update_schedule"));
    }

    #[test]
    fn stationary_schedule_boundaries() {
        let s = UpdateSchedule::stationary();
        assert_eq!(s.omega(0), 100);
        assert_eq!(s.omega(19), 100);
        assert_eq!(s.omega(20), 500);
        assert_eq!(s.omega(39), 500);
        assert_eq!(s.omega(40), 1000);
        assert_eq!(s.omega(10_000), 1000);
        let n = UpdateSchedule::nonstationary();
        assert_eq!(n.omega(19), 100);
        assert_eq!(n.omega(20), 500);
        assert_eq!(n.omega(500), 500);
    }

    #[test]
    fn seeds_are_distinct() {
        let s = Seeds::from_master(7);
        let all = [s.stream, s.importance, s.init, s.evaluation];
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(all[i], all[j]);
            }
        }
    }

    #[test]
    fn ucb_mode_parse() {
        assert_eq!("heuristic".parse::<UcbMode>().unwrap(), UcbMode::Heuristic);
        assert!("lil".parse::<UcbMode>().is_err());
    }
}
