//! Scoring functions: the trainable two-layer network, fixed baselines
//! and the two-logit classifier used by the binary baseline.

mod baseline;
mod classifier;
mod network;
pub mod objective;
pub mod optim;
pub mod train;

pub use baseline::{BaselineScorer, PrecomputedScores};
pub use classifier::{train_classifier, BinaryClassifier};
pub use network::TwoLayerScorer;

use crate::domain::FeatureVector;
use crate::error::Result;

/// Any map from features to a scalar; larger means more ID-like.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoringFunction {
    Network(TwoLayerScorer),
    Baseline(BaselineScorer),
    Classifier(BinaryClassifier),
}

impl ScoringFunction {
    pub fn score(&self, x: &FeatureVector) -> Result<f64> {
        match self {
            Self::Network(g) => {
                g.check_dim(x.values())?;
                Ok(g.score_slice(x.values()))
            }
            Self::Baseline(b) => b.score(x),
            Self::Classifier(c) => {
                c.check_dim(x.values())?;
                Ok(c.score_slice(x.values()))
            }
        }
    }

    /// Scores a raw slice without a dimension check. Fails only for
    /// precomputed tables, which need a sample key.
    pub fn score_slice(&self, x: &[f64]) -> Result<f64> {
        match self {
            Self::Network(g) => Ok(g.score_slice(x)),
            Self::Baseline(b) => b.score_slice(x),
            Self::Classifier(c) => Ok(c.score_slice(x)),
        }
    }

    /// Weight vector when the score is linear in `x`.
    pub fn as_linear(&self) -> Option<&[f64]> {
        match self {
            Self::Baseline(BaselineScorer::LinearProjection { w }) => Some(w),
            _ => None,
        }
    }

    pub fn as_network(&self) -> Option<&TwoLayerScorer> {
        match self {
            Self::Network(g) => Some(g),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Network(_) => "network",
            Self::Baseline(BaselineScorer::LinearProjection { .. }) => "linear_projection",
            Self::Baseline(BaselineScorer::NegDistanceToMean { .. }) => "neg_distance_to_mean",
            Self::Baseline(BaselineScorer::Precomputed(_)) => "precomputed",
            Self::Classifier(_) => "classifier",
        }
    }
}

impl From<TwoLayerScorer> for ScoringFunction {
    fn from(g: TwoLayerScorer) -> Self {
        Self::Network(g)
    }
}

impl From<BaselineScorer> for ScoringFunction {
    fn from(b: BaselineScorer) -> Self {
        Self::Baseline(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn network_dimension_checked() {
        let g = ScoringFunction::from(TwoLayerScorer::zeros(3, 2));
        let x = FeatureVector::new(vec![1.0, 2.0]).unwrap();
        assert!(g.score(&x).is_err());
    }

    #[test]
    fn positive_homogeneity() {
        let mut rng = crate::runio::rng::SimRng::new(3);
        let g = TwoLayerScorer::random(4, 8, &mut rng);
        let h = g.scaled_output(2.5);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let (a, b) = (g.score_slice(&x), h.score_slice(&x));
            assert!((b - 2.5 * a).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
