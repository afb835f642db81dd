use std::collections::HashMap;
use std::sync::Arc;

use crate::domain::FeatureVector;
use crate::error::{Error, Result};

/// Fixed, parameter-free scorers standing in for post-hoc OOD scores.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineScorer {
    /// `w . x`.
    LinearProjection { w: Vec<f64> },
    /// `-||x - mu||`.
    NegDistanceToMean { mu: Vec<f64> },
    /// Scores looked up by the sample key of file-backed rows.
    Precomputed(PrecomputedScores),
}

impl BaselineScorer {
    pub fn linear(w: Vec<f64>) -> Result<Self> {
        check_finite(&w)?;
        Ok(Self::LinearProjection { w })
    }

    pub fn neg_distance(mu: Vec<f64>) -> Result<Self> {
        check_finite(&mu)?;
        Ok(Self::NegDistanceToMean { mu })
    }

    pub fn score(&self, x: &FeatureVector) -> Result<f64> {
        match self {
            Self::LinearProjection { w } => {
                check_dim(w.len(), x)?;
                Ok(dot(w, x.values()))
            }
            Self::NegDistanceToMean { mu } => {
                check_dim(mu.len(), x)?;
                let sq: f64 = mu
                    .iter()
                    .zip(x.values())
                    .map(|(m, v)| (v - m) * (v - m))
                    .sum();
                Ok(-sq.sqrt())
            }
            Self::Precomputed(table) => table.get(x.key()),
        }
    }

    /// Scores a raw slice. Precomputed tables need a key and fail here.
    pub fn score_slice(&self, x: &[f64]) -> Result<f64> {
        match self {
            Self::LinearProjection { w } => Ok(dot(w, x)),
            Self::NegDistanceToMean { mu } => {
                let sq: f64 = mu.iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum();
                Ok(-sq.sqrt())
            }
            Self::Precomputed(_) => Err(Error::MissingScore(None)),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::config("baseline parameters must be non-empty"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("baseline parameters"));
    }
    Ok(())
}

fn check_dim(expected: usize, x: &FeatureVector) -> Result<()> {
    if x.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.dim(),
        });
    }
    Ok(())
}

/// Score table keyed by sample index; cheap to clone.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrecomputedScores {
    table: Arc<HashMap<u64, f64>>,
}

impl PrecomputedScores {
    pub fn new(entries: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        let mut table = HashMap::new();
        for (k, s) in entries {
            if !s.is_finite() {
                return Err(Error::NonFinite("precomputed score"));
            }
            table.insert(k, s);
        }
        Ok(Self {
            table: Arc::new(table),
        })
    }

    pub fn get(&self, key: Option<u64>) -> Result<f64> {
        key.and_then(|k| self.table.get(&k).copied())
            .ok_or(Error::MissingScore(key))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_onto_first_axis() {
        let g = BaselineScorer::linear(vec![1.0, 0.0, 0.0]).unwrap();
        let x = FeatureVector::new(vec![0.7, -2.0, 9.0]).unwrap();
        assert_eq!(g.score(&x).unwrap(), 0.7);
        let bad = FeatureVector::new(vec![0.7]).unwrap();
        assert!(matches!(g.score(&bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn distance_to_mean() {
        let g = BaselineScorer::neg_distance(vec![0.0, 0.0]).unwrap();
        let x = FeatureVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(g.score(&x).unwrap(), -5.0);
    }

    #[test]
    fn precomputed_lookup() {
        let t = PrecomputedScores::new([(3, 0.25), (9, -1.0)]).unwrap();
        let g = BaselineScorer::Precomputed(t);
        let x = FeatureVector::new(vec![0.0]).unwrap().with_key(9);
        assert_eq!(g.score(&x).unwrap(), -1.0);
        let missing = FeatureVector::new(vec![0.0]).unwrap().with_key(4);
        assert!(matches!(g.score(&missing), Err(Error::MissingScore(Some(4)))));
    }
}
