//! Built-in synthetic scenarios. All use `d = 8`, ID `N(0, I)` and OOD
//! components `N(-delta * e1, I)`; the initial scorer is the unit
//! projection `0.5 e1 + (sqrt(3)/2) e2`, which sees only half of the mean gap.

use crate::config::UpdateSchedule;
use crate::error::{Error, Result};
use crate::scorefn::BaselineScorer;
use crate::sim::distribution::{ComponentDistribution, Gaussian};
use crate::sim::stream::{OodPhase, StreamSpec};

pub const DIM: usize = 8;
pub const GAMMA: f64 = 0.2;

/// A stream together with the run settings it was designed for.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    pub stream: StreamSpec,
    pub baseline: BaselineScorer,
    /// Size of the initial ID set.
    pub n_id: usize,
    pub update_schedule: UpdateSchedule,
    pub est_window: Option<usize>,
    pub eval_window: Option<u64>,
}

type Builder = fn(u64) -> Result<Scenario>;

const PRESETS: &[(&str, &str, Builder)] = &[
    (
        "stationary-overlap",
        "OOD mean gap 3.5 along e1; misaligned initial projection",
        stationary_overlap,
    ),
    (
        "stationary-hard",
        "OOD mean gap 2.5 along e1; misaligned initial projection",
        stationary_hard,
    ),
    (
        "shift-easy-to-hard",
        "OOD mean gap drops from 6 to 3.5 at step 25001",
        shift_easy_to_hard,
    ),
    (
        "shift-hard-to-easy",
        "OOD mean gap grows from 3.5 to 6 at step 25001",
        shift_hard_to_easy,
    ),
];

pub fn scenario_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _, _)| *n).collect()
}

pub fn scenario_descriptions() -> Vec<(&'static str, &'static str)> {
    PRESETS.iter().map(|(n, d, _)| (*n, *d)).collect()
}

/// Builds the named scenario with stream seed `seed`.
pub fn preset(name: &str, seed: u64) -> Result<Scenario> {
    PRESETS
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, _, b)| b(seed))
        .unwrap_or_else(|| {
            Err(Error::UnknownName {
                kind: "scenario",
                name: name.to_string(),
                known: scenario_names().join(", "),
            })
        })
}

pub fn preset_scenarios(seed: u64) -> Result<Vec<Scenario>> {
    PRESETS.iter().map(|(_, _, b)| b(seed)).collect()
}

pub fn id_component() -> ComponentDistribution {
    ComponentDistribution::Gaussian(Gaussian::isotropic(vec![0.0; DIM]).expect("valid"))
}

/// `N(-gap * e1, I)`.
pub fn ood_component(gap: f64) -> ComponentDistribution {
    let mut mean = vec![0.0; DIM];
    mean[0] = -gap;
    ComponentDistribution::Gaussian(Gaussian::isotropic(mean).expect("valid"))
}

pub fn misaligned_projection() -> Vec<f64> {
    let mut w = vec![0.0; DIM];
    w[0] = 0.5;
    w[1] = 3f64.sqrt() / 2.0;
    w
}

/// Bayes-optimal direction for the built-in geometry.
pub fn aligned_projection() -> Vec<f64> {
    let mut w = vec![0.0; DIM];
    w[0] = 1.0;
    w
}

fn scenario(
    name: &'static str,
    phases: &[(u64, f64)],
    seed: u64,
    update_schedule: UpdateSchedule,
    est_window: Option<usize>,
    eval_window: Option<u64>,
) -> Result<Scenario> {
    let description = PRESETS
        .iter()
        .find(|(n, _, _)| *n == name)
        .map_or("", |(_, d, _)| *d);
    let stream = StreamSpec {
        id_dist: id_component(),
        ood_phases: phases
            .iter()
            .map(|&(start, gap)| OodPhase {
                start,
                dist: ood_component(gap),
            })
            .collect(),
        gamma: GAMMA,
        horizon: 50_000,
        seed,
    }
    .validate()?;
    Ok(Scenario {
        name,
        description,
        stream,
        baseline: BaselineScorer::linear(misaligned_projection())?,
        n_id: 2000,
        update_schedule,
        est_window,
        eval_window,
    })
}

fn stationary_overlap(seed: u64) -> Result<Scenario> {
    scenario(
        "stationary-overlap",
        &[(1, 3.5)],
        seed,
        UpdateSchedule::stationary(),
        None,
        Some(10_000),
    )
}

fn stationary_hard(seed: u64) -> Result<Scenario> {
    scenario(
        "stationary-hard",
        &[(1, 2.5)],
        seed,
        UpdateSchedule::stationary(),
        None,
        Some(10_000),
    )
}

fn shift_easy_to_hard(seed: u64) -> Result<Scenario> {
    scenario(
        "shift-easy-to-hard",
        &[(1, 6.0), (25_001, 3.5)],
        seed,
        UpdateSchedule::nonstationary(),
        Some(2000),
        Some(5000),
    )
}

fn shift_hard_to_easy(seed: u64) -> Result<Scenario> {
    scenario(
        "shift-hard-to-easy",
        &[(1, 3.5), (25_001, 6.0)],
        seed,
        UpdateSchedule::nonstationary(),
        Some(2000),
        Some(5000),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_resolve() {
        for n in scenario_names() {
            let s = preset(n, 1).unwrap();
            assert_eq!(s.name, n);
            assert_eq!(s.stream.dim(), DIM);
        }
        assert!(matches!(
            preset("nope", 1),
            Err(Error::UnknownName { kind: "scenario", .. })
        ));
    }

    #[test]
    fn projections_are_unit() {
        let n: f64 = misaligned_projection().iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}
