//! TOML run configuration. Unknown keys are errors and `seed` is required.
//!
//! ```toml
//! seed = 7
//! scenario = "stationary-overlap"   # or a [stream] section
//! horizon = 20000                   # optional override
//!
//! [engine]
//! alpha = 0.05
//! ucb_mode = "heuristic"
//! est_window = 2000
//! update_schedule = [{ every = 100, count = 20 }, { every = 500 }]
//!
//! [stream]
//! gamma = 0.2
//! horizon = 10000
//! id = { kind = "gaussian", mean = [0.0, 0.0] }
//! baseline = { kind = "linear", w = [1.0, 0.0] }
//! [[stream.ood]]
//! start = 1
//! dist = { kind = "gaussian", mean = [-2.0, 0.0], var = [1.0, 1.0] }
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{
    EngineConfig, GridSpec, HeuristicConstants, OptimizerSettings, UcbMode, UpdateSchedule,
};
use crate::domain::Label;
use crate::error::{Error, Result};
use crate::experiment::RunConfig;
use crate::metrics::LabelSource;
use crate::runio::feature_table::{load_score_table, FeatureTable};
use crate::scorefn::BaselineScorer;
use crate::sim::scenarios::preset;
use crate::sim::truth::DEFAULT_N_MC;
use crate::sim::{ComponentDistribution, Gaussian, OodPhase, StreamSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: u64,
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default)]
    pub horizon: Option<u64>,
    #[serde(default)]
    pub n_id: Option<usize>,
    #[serde(default)]
    pub n_mc: Option<usize>,
    #[serde(default)]
    pub eval_label: Option<LabelSource>,
    #[serde(default)]
    pub engine: EngineSection,
    #[serde(default)]
    pub stream: Option<StreamSection>,
}

/// Overrides on top of the defaults (or the scenario's settings).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    pub delta: Option<f64>,
    pub dkw_delta: Option<f64>,
    pub beta: Option<f64>,
    pub kappa: Option<f64>,
    pub grid: Option<GridSpec>,
    pub update_schedule: Option<UpdateSchedule>,
    pub est_window: Option<usize>,
    pub eval_window: Option<u64>,
    pub ucb_mode: Option<UcbMode>,
    pub heuristic: Option<HeuristicConstants>,
    pub optimizer: Option<OptimizerSettings>,
}

fn default_gamma() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSection {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub horizon: u64,
    pub id: ComponentSection,
    pub ood: Vec<PhaseSection>,
    pub baseline: BaselineSection,
    #[serde(default)]
    pub n_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSection {
    pub start: u64,
    pub dist: ComponentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedGaussian {
    pub weight: f64,
    pub mean: Vec<f64>,
    #[serde(default)]
    pub var: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComponentSection {
    Gaussian {
        mean: Vec<f64>,
        #[serde(default)]
        var: Option<Vec<f64>>,
    },
    Mixture {
        components: Vec<WeightedGaussian>,
    },
    /// Rows of a feature table with the given label (0 = OOD, 1 = ID).
    File { path: PathBuf, label: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineSection {
    Linear { w: Vec<f64> },
    NegDistance { mu: Vec<f64> },
    /// Two-column `row_index,score` table for file-backed rows.
    Precomputed { path: PathBuf },
}

fn gaussian(mean: &[f64], var: &Option<Vec<f64>>) -> Result<Gaussian> {
    let var = var.clone().unwrap_or_else(|| vec![1.0; mean.len()]);
    Gaussian::new(mean.to_vec(), var)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ComponentSection {
    fn build(&self, base: &Path) -> Result<ComponentDistribution> {
        match self {
            Self::Gaussian { mean, var } => Ok(ComponentDistribution::Gaussian(gaussian(mean, var)?)),
            Self::Mixture { components } => ComponentDistribution::mixture(
                components
                    .iter()
                    .map(|c| Ok((c.weight, gaussian(&c.mean, &c.var)?)))
                    .collect::<Result<_>>()?,
            ),
            Self::File { path, label } => {
                let label = Label::from_u8(*label)
                    .ok_or_else(|| Error::config("file component label must be 0 or 1"))?;
                let table = FeatureTable::load(resolve(base, path))?;
                ComponentDistribution::file_backed(Arc::new(table), label)
            }
        }
    }
}

impl BaselineSection {
    fn build(&self, base: &Path) -> Result<BaselineScorer> {
        match self {
            Self::Linear { w } => BaselineScorer::linear(w.clone()),
            Self::NegDistance { mu } => BaselineScorer::neg_distance(mu.clone()),
            Self::Precomputed { path } => Ok(BaselineScorer::Precomputed(load_score_table(
                resolve(base, path),
            )?)),
        }
    }
}

impl EngineSection {
    fn apply(&self, mut e: EngineConfig) -> EngineConfig {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f.clone() {
                    e.$f = v;
                }
            )*};
        }
        set!(alpha, p, delta, dkw_delta, beta, kappa, grid, update_schedule, ucb_mode, optimizer);
        if self.est_window.is_some() {
            e.est_window = self.est_window;
        }
        if self.eval_window.is_some() {
            e.eval_window = self.eval_window;
        }
        if self.heuristic.is_some() {
            e.heuristic = self.heuristic;
        }
        e
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses config text; relative file paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    build_config(&file, base)
}

pub fn build_config(file: &ConfigFile, base: &Path) -> Result<RunConfig> {
    let (engine, stream, baseline, n_id, source) = match (&file.scenario, &file.stream) {
        (Some(_), Some(_)) => {
            return Err(Error::config("give either `scenario` or a [stream] section, not both"))
        }
        (None, None) => return Err(Error::config("a `scenario` or a [stream] section is required")),
        (Some(name), None) => {
            let sc = preset(name, 0)?;
            let engine = EngineConfig {
                update_schedule: sc.update_schedule,
                est_window: sc.est_window,
                eval_window: sc.eval_window,
                ..EngineConfig::default()
            };
            (engine, sc.stream, sc.baseline, sc.n_id, None)
        }
        (None, Some(s)) => {
            let stream = StreamSpec {
                id_dist: s.id.build(base)?,
                ood_phases: s
                    .ood
                    .iter()
                    .map(|p| {
                        Ok(OodPhase {
                            start: p.start,
                            dist: p.dist.build(base)?,
                        })
                    })
                    .collect::<Result<_>>()?,
                gamma: s.gamma,
                horizon: s.horizon,
                seed: 0,
            };
            let source = serde_json::to_value(s).expect("stream sections serialize");
            (
                EngineConfig::default(),
                stream,
                s.baseline.build(base)?,
                s.n_id.unwrap_or(2000),
                Some(source),
            )
        }
    };
    let mut stream = stream;
    if let Some(h) = file.horizon {
        stream.horizon = h;
    }
    RunConfig::new(
        file.seed,
        file.scenario.clone(),
        file.engine.apply(engine),
        stream,
        baseline,
        file.n_id.unwrap_or(n_id),
        file.n_mc.unwrap_or(DEFAULT_N_MC),
        file.eval_label.unwrap_or_default(),
        source,
    )
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}
