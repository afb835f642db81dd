//! Ground-truth FPR/TPR of a detector against the simulator's components.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::domain::FeatureVector;
use crate::engine::Detector;
use crate::error::Result;
use crate::runio::rng::SimRng;
use crate::scorefn::ScoringFunction;
use crate::sim::distribution::ComponentDistribution;
use crate::sim::stream::StreamSpec;

pub const DEFAULT_N_MC: usize = 100_000;

/// A population exceedance probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Zero when `exact`.
    pub std_error: f64,
    pub exact: bool,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            exact: true,
        }
    }

    fn monte_carlo(hits: usize, n: usize) -> Self {
        let v = hits as f64 / n as f64;
        Self {
            value: v,
            std_error: (v * (1.0 - v) / n as f64).sqrt(),
            exact: false,
        }
    }
}

/// `P_{x ~ dist}(g(x) > lambda)`: closed form for linear `g` on Gaussian
/// components, exact enumeration for file-backed ones, otherwise `n_mc`
/// draws from `rng`.
pub fn exceedance(
    g: &ScoringFunction,
    lambda: f64,
    dist: &ComponentDistribution,
    n_mc: usize,
    rng: &mut SimRng,
) -> Result<Estimate> {
    if lambda == f64::INFINITY {
        return Ok(Estimate::exact(0.0));
    }
    if lambda == f64::NEG_INFINITY {
        return Ok(Estimate::exact(1.0));
    }
    if let Some(p) = g.as_linear().and_then(|w| dist.linear_exceedance(w, lambda)) {
        return Ok(Estimate::exact(p));
    }
    if let ComponentDistribution::FileBacked { table, rows, .. } = dist {
        let mut hits = 0;
        for &i in rows.iter() {
            if g.score(&table.keyed_row(i))? > lambda {
                hits += 1;
            }
        }
        return Ok(Estimate::exact(hits as f64 / rows.len() as f64));
    }
    let n = n_mc.max(1);
    let mut x = Vec::with_capacity(dist.dim());
    let mut hits = 0;
    for _ in 0..n {
        x.clear();
        dist.sample_into(rng, &mut x);
        if g.score_slice(&x)? > lambda {
            hits += 1;
        }
    }
    Ok(Estimate::monte_carlo(hits, n))
}

pub fn true_fpr(
    g: &ScoringFunction,
    lambda: f64,
    ood: &ComponentDistribution,
    n_mc: usize,
    rng: &mut SimRng,
) -> Result<Estimate> {
    exceedance(g, lambda, ood, n_mc, rng)
}

pub fn true_tpr(
    g: &ScoringFunction,
    lambda: f64,
    id: &ComponentDistribution,
    n_mc: usize,
    rng: &mut SimRng,
) -> Result<Estimate> {
    exceedance(g, lambda, id, n_mc, rng)
}

enum Population {
    Flat { dim: usize, values: Vec<f64> },
    Keyed(Vec<FeatureVector>),
}

impl Population {
    fn len(&self) -> usize {
        match self {
            Self::Flat { dim, values } => values.len() / dim,
            Self::Keyed(rows) => rows.len(),
        }
    }

    fn scores(&self, g: &ScoringFunction) -> Result<Vec<f64>> {
        match self {
            Self::Flat { dim, values } => values.chunks(*dim).map(|x| g.score_slice(x)).collect(),
            Self::Keyed(rows) => rows.iter().map(|x| g.score(x)).collect(),
        }
    }
}

struct Component {
    dist: ComponentDistribution,
    exact: bool,
    population: Population,
}

const CACHE_SLOTS: usize = 8;

/// Truth evaluator for one run. Monte Carlo populations are drawn once per
/// component from the evaluation seed, so successive checkpoints share
/// their noise. Sorted scores are cached per `(version, component)`; the
/// caller guarantees a version identifies one scorer.
pub struct TruthEvaluator {
    components: Vec<Component>,
    cache: VecDeque<((u64, usize), Arc<Vec<f64>>)>,
}

impl TruthEvaluator {
    /// Component 0 is the ID distribution, component `k + 1` is OOD phase `k`.
    pub fn new(spec: &StreamSpec, n_mc: usize, evaluation_seed: u64) -> Self {
        let dists = std::iter::once(&spec.id_dist).chain(spec.ood_phases.iter().map(|p| &p.dist));
        let components = dists
            .enumerate()
            .map(|(k, dist)| {
                let (exact, population) = match dist {
                    ComponentDistribution::FileBacked { table, rows, .. } => {
                        (true, Population::Keyed(rows.iter().map(|&i| table.keyed_row(i)).collect()))
                    }
                    _ => {
                        let mut rng = SimRng::new(
                            evaluation_seed.wrapping_add((k as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)),
                        );
                        let n = n_mc.max(1);
                        let mut values = Vec::with_capacity(n * dist.dim());
                        for _ in 0..n {
                            dist.sample_into(&mut rng, &mut values);
                        }
                        (false, Population::Flat { dim: dist.dim(), values })
                    }
                };
                Component {
                    dist: dist.clone(),
                    exact,
                    population,
                }
            })
            .collect();
        Self {
            components,
            cache: VecDeque::new(),
        }
    }

    fn sorted_scores(&mut self, det: &Detector<'_>, comp: usize) -> Result<Arc<Vec<f64>>> {
        let key = (det.version, comp);
        if let Some(pos) = self.cache.iter().position(|(k, _)| *k == key) {
            let entry = self.cache.remove(pos).expect("position is valid");
            let scores = entry.1.clone();
            self.cache.push_front(entry);
            return Ok(scores);
        }
        let mut scores = self.components[comp].population.scores(det.scorer)?;
        scores.sort_unstable_by(f64::total_cmp);
        let scores = Arc::new(scores);
        self.cache.push_front((key, scores.clone()));
        self.cache.truncate(CACHE_SLOTS);
        Ok(scores)
    }

    /// Exceedance of `lambda` under the deployed scorer of `det`.
    pub fn exceedance_at(&mut self, det: &Detector<'_>, comp: usize, lambda: f64) -> Result<Estimate> {
        Ok(self.exceedance_curve(det, comp, &[lambda])?[0])
    }

    /// Exceedances of several thresholds at once.
    pub fn exceedance_curve(
        &mut self,
        det: &Detector<'_>,
        comp: usize,
        lambdas: &[f64],
    ) -> Result<Vec<Estimate>> {
        if let Some(w) = det.scorer.as_linear() {
            let c = &self.components[comp];
            if c.dist.linear_exceedance(w, 0.0).is_some() {
                return Ok(lambdas
                    .iter()
                    .map(|&l| match l {
                        f64::INFINITY => Estimate::exact(0.0),
                        f64::NEG_INFINITY => Estimate::exact(1.0),
                        _ => Estimate::exact(c.dist.linear_exceedance(w, l).unwrap_or(0.0)),
                    })
                    .collect());
            }
        }
        let scores = self.sorted_scores(det, comp)?;
        let n = self.components[comp].population.len();
        let exact = self.components[comp].exact;
        Ok(lambdas
            .iter()
            .map(|&l| {
                let hits = n - scores.partition_point(|s| *s <= l);
                if exact || l.is_infinite() {
                    Estimate::exact(hits as f64 / n as f64)
                } else {
                    Estimate::monte_carlo(hits, n)
                }
            })
            .collect())
    }

    /// True FPR of the detector against OOD phase `phase`.
    pub fn fpr(&mut self, det: &Detector<'_>, phase: usize) -> Result<Estimate> {
        self.exceedance_at(det, phase + 1, det.lambda)
    }

    pub fn tpr(&mut self, det: &Detector<'_>) -> Result<Estimate> {
        self.exceedance_at(det, 0, det.lambda)
    }

    /// Number of OOD phases.
    pub fn phases(&self) -> usize {
        self.components.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorefn::{BaselineScorer, TwoLayerScorer};
    use crate::sim::distribution::Gaussian;

    fn one_d(m: f64) -> ComponentDistribution {
        ComponentDistribution::Gaussian(Gaussian::isotropic(vec![m]).unwrap())
    }

    fn identity() -> ScoringFunction {
        BaselineScorer::linear(vec![1.0]).unwrap().into()
    }

    #[test]
    fn closed_form_examples() {
        let mut rng = SimRng::new(0);
        let f = true_fpr(&identity(), 0.0, &one_d(-1.0), 10, &mut rng).unwrap();
        assert!(f.exact);
        assert!((f.value - 0.158_655_253_931_457).abs() < 1e-12);
        let t = true_tpr(&identity(), 0.0, &one_d(1.0), 10, &mut rng).unwrap();
        assert!((t.value - 0.841_344_746_068_543).abs() < 1e-12);
        assert_eq!(true_fpr(&identity(), f64::INFINITY, &one_d(0.0), 1, &mut rng).unwrap().value, 0.0);
        assert_eq!(true_tpr(&identity(), f64::NEG_INFINITY, &one_d(0.0), 1, &mut rng).unwrap().value, 1.0);
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        // A network computing relu(x) - relu(-x) = x, so it takes the MC path.
        let net = TwoLayerScorer::new(1, 2, vec![1.0, -1.0], vec![1.0, -1.0]).unwrap();
        let g: ScoringFunction = net.into();
        assert!(g.as_linear().is_none());
        let mut rng = SimRng::new(9);
        let mc = true_fpr(&g, 0.0, &one_d(-1.0), 100_000, &mut rng).unwrap();
        assert!(!mc.exact);
        assert!((mc.value - 0.158_655_253_931_457).abs() < 3.0 * mc.std_error, "{mc:?}");
    }

    #[test]
    fn evaluator_curves_are_monotone() {
        let spec = StreamSpec::stationary(one_d(1.0), one_d(-1.0), 0.2, 10, 1).unwrap();
        let net = TwoLayerScorer::new(1, 2, vec![1.0, -1.0], vec![1.0, -1.0]).unwrap();
        let g: ScoringFunction = net.into();
        let mut ev = TruthEvaluator::new(&spec, 20_000, 3);
        let det = Detector {
            scorer: &g,
            lambda: 0.0,
            version: 1,
        };
        let lambdas: Vec<f64> = (-30..=30).map(|i| i as f64 / 10.0).collect();
        let curve = ev.exceedance_curve(&det, 0, &lambdas).unwrap();
        assert!(curve.windows(2).all(|w| w[1].value <= w[0].value));
        let tpr = ev.tpr(&det).unwrap();
        assert!((tpr.value - 0.841_344_746_068_543).abs() < 4.0 * tpr.std_error);
        // Cached scores give the same answer.
        assert_eq!(ev.tpr(&det).unwrap(), tpr);
        assert_eq!(ev.phases(), 1);
    }
}
