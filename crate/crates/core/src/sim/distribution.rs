use std::sync::Arc;

use crate::domain::{FeatureVector, Label};
use crate::error::{Error, Result};
use crate::runio::feature_table::FeatureTable;
use crate::runio::rng::SimRng;

/// Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: Vec<f64>,
    var: Vec<f64>,
    sd: Vec<f64>,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != var.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len().max(1),
                got: var.len(),
            });
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("gaussian mean"));
        }
        if var.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("gaussian variances must be positive"));
        }
        let sd = var.iter().map(|v| v.sqrt()).collect();
        Ok(Self { mean, var, sd })
    }

    pub fn isotropic(mean: Vec<f64>) -> Result<Self> {
        let var = vec![1.0; mean.len()];
        Self::new(mean, var)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample_into(&self, rng: &mut SimRng, out: &mut Vec<f64>) {
        out.extend(self.mean.iter().zip(&self.sd).map(|(m, s)| m + s * rng.normal()));
    }

    /// `P(w . x > lambda)`.
    pub fn linear_exceedance(&self, w: &[f64], lambda: f64) -> f64 {
        let m: f64 = w.iter().zip(&self.mean).map(|(a, b)| a * b).sum();
        let v: f64 = w.iter().zip(&self.var).map(|(a, s)| a * a * s).sum();
        if v <= 0.0 {
            return if m > lambda { 1.0 } else { 0.0 };
        }
        0.5 * libm::erfc((lambda - m) / (2.0 * v).sqrt())
    }
}

/// A source distribution for ID or OOD draws.
#[derive(Debug, Clone, PartialEq)]
pub enum ComponentDistribution {
    Gaussian(Gaussian),
    Mixture(Vec<(f64, Gaussian)>),
    /// Uniform draws over the rows of a feature table carrying `label`.
    /// Drawn vectors are keyed by row index.
    FileBacked {
        table: Arc<FeatureTable>,
        label: Label,
        rows: Arc<Vec<usize>>,
    },
}

impl ComponentDistribution {
    pub fn mixture(parts: Vec<(f64, Gaussian)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::config("mixture needs at least one component"));
        }
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        if parts.iter().any(|(w, _)| !(*w > 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("mixture weights must be positive and sum to 1"));
        }
        let d = parts[0].1.dim();
        if parts.iter().any(|(_, g)| g.dim() != d) {
            return Err(Error::config("mixture components must share a dimension"));
        }
        Ok(Self::Mixture(parts))
    }

    pub fn file_backed(table: Arc<FeatureTable>, label: Label) -> Result<Self> {
        let rows = table.indices_of(label);
        if rows.is_empty() {
            return Err(Error::config(format!(
                "feature table has no rows with label {}",
                label.as_u8()
            )));
        }
        Ok(Self::FileBacked {
            table,
            label,
            rows: Arc::new(rows),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.dim(),
            Self::Mixture(parts) => parts[0].1.dim(),
            Self::FileBacked { table, .. } => table.dim(),
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> FeatureVector {
        match self {
            Self::FileBacked { table, rows, .. } => table.keyed_row(rows[rng.below(rows.len())]),
            _ => {
                let mut v = Vec::with_capacity(self.dim());
                self.sample_into(rng, &mut v);
                FeatureVector::new(v).expect("gaussian draws are finite")
            }
        }
    }

    /// Appends one draw to `out`. File-backed draws lose their key here.
    pub fn sample_into(&self, rng: &mut SimRng, out: &mut Vec<f64>) {
        match self {
            Self::Gaussian(g) => g.sample_into(rng, out),
            Self::Mixture(parts) => {
                let u = rng.uniform();
                let mut acc = 0.0;
                let mut pick = &parts[parts.len() - 1].1;
                for (w, g) in parts {
                    acc += w;
                    if u < acc {
                        pick = g;
                        break;
                    }
                }
                pick.sample_into(rng, out);
            }
            Self::FileBacked { table, rows, .. } => {
                out.extend_from_slice(table.rows()[rows[rng.below(rows.len())]].1.values())
            }
        }
    }

    /// Closed-form `P(w . x > lambda)` for Gaussian components.
    pub fn linear_exceedance(&self, w: &[f64], lambda: f64) -> Option<f64> {
        match self {
            Self::Gaussian(g) => Some(g.linear_exceedance(w, lambda)),
            Self::Mixture(parts) => Some(
                parts
                    .iter()
                    .map(|(p, g)| p * g.linear_exceedance(w, lambda))
                    .sum(),
            ),
            Self::FileBacked { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_tail() {
        let g = Gaussian::isotropic(vec![-1.0]).unwrap();
        // 1 - Phi(1)
        assert!((g.linear_exceedance(&[1.0], 0.0) - 0.158_655_253_931_457).abs() < 1e-12);
        let id = Gaussian::isotropic(vec![1.0]).unwrap();
        assert!((id.linear_exceedance(&[1.0], 0.0) - 0.841_344_746_068_543).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Gaussian::new(vec![0.0], vec![0.0]).is_err());
        assert!(Gaussian::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let g = Gaussian::isotropic(vec![0.0]).unwrap();
        assert!(ComponentDistribution::mixture(vec![(0.5, g.clone()), (0.4, g)]).is_err());
    }

    #[test]
    fn mixture_draws_follow_weights() {
        let a = Gaussian::isotropic(vec![-10.0]).unwrap();
        let b = Gaussian::isotropic(vec![10.0]).unwrap();
        let m = ComponentDistribution::mixture(vec![(0.3, a), (0.7, b)]).unwrap();
        let mut rng = SimRng::new(2);
        let n = 20_000;
        let neg = (0..n).filter(|_| m.sample(&mut rng).values()[0] < 0.0).count();
        let se = (0.3 * 0.7 / n as f64).sqrt();
        assert!((neg as f64 / n as f64 - 0.3).abs() < 3.0 * se);
        assert!((m.linear_exceedance(&[1.0], 0.0).unwrap() - 0.7).abs() < 1e-12);
    }
}
