//! Value types shared by every module: feature points, stream samples,
//! labeled OOD records, the threshold grid and the UCB counters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary label. `Ood` is 0 and `Id` is 1, matching the wire formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Ood,
    Id,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Ood => 0,
            Label::Id => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Ood),
            1 => Some(Label::Id),
            _ => None,
        }
    }
}

/// A d-dimensional feature point.
///
/// `key` is set only for rows drawn from a file-backed feature table; it is
/// what a precomputed score table is keyed by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key: Option<u64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature vector"));
        }
        Ok(Self { values, key: None })
    }

    /// Builds a vector and checks it against the configured stream dimension.
    pub fn with_dim(values: Vec<f64>, dim: usize) -> Result<Self> {
        if values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: values.len(),
            });
        }
        Self::new(values)
    }

    pub fn with_key(mut self, key: u64) -> Self {
        self.key = Some(key);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn key(&self) -> Option<u64> {
        self.key
    }
}

/// One arrival of the stream. `y_true` is hidden from the engine and only
/// reachable through a [`LabelOracle`](crate::engine::LabelOracle).
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSample {
    pub t: u64,
    pub x: FeatureVector,
    pub y_true: Label,
}

/// A human-confirmed OOD sample together with its importance weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledOodRecord {
    pub t: u64,
    pub x: FeatureVector,
    pub z_weight: f64,
    pub via_importance: bool,
}

impl LabeledOodRecord {
    /// Weight is `1/p` for importance-sampled records and `1` otherwise.
    pub fn new(t: u64, x: FeatureVector, via_importance: bool, p: f64) -> Self {
        let z_weight = if via_importance { 1.0 / p } else { 1.0 };
        Self {
            t,
            x,
            z_weight,
            via_importance,
        }
    }
}

/// Discretized threshold set `{min, min + eta, ...}` up to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    lambda_min: f64,
    lambda_max: f64,
    eta: f64,
    len: usize,
}

impl ThresholdGrid {
    pub fn new(lambda_min: f64, lambda_max: f64, eta: f64) -> Result<Self> {
        if !(lambda_min.is_finite() && lambda_max.is_finite() && eta.is_finite()) {
            return Err(Error::config("grid bounds must be finite"));
        }
        if eta <= 0.0 {
            return Err(Error::config("grid step must be positive"));
        }
        if lambda_min >= lambda_max {
            return Err(Error::config("grid requires lambda_min < lambda_max"));
        }
        // A relative slack absorbs the rounding in (max - min) / eta when the
        // step was itself derived by dividing the range.
        let steps = ((lambda_max - lambda_min) / eta * (1.0 + 1e-12)).floor();
        let len = steps as usize + 1;
        if len < 2 {
            return Err(Error::config("grid must hold at least two thresholds"));
        }
        Ok(Self {
            lambda_min,
            lambda_max,
            eta,
            len,
        })
    }

    /// Grid spanning the [0.1%, 99.9%] empirical quantiles of `scores`,
    /// widened by 10% of that range on each side, with `points` thresholds.
    pub fn from_id_scores(scores: &[f64], points: usize) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyIdSet);
        }
        if points < 2 {
            return Err(Error::config("grid must hold at least two thresholds"));
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let lo = empirical_quantile(&sorted, 0.001);
        let hi = empirical_quantile(&sorted, 0.999);
        let mut range = hi - lo;
        if range <= 0.0 {
            range = 1.0;
        }
        let min = lo - 0.1 * range;
        let max = hi + 0.1 * range;
        Self::new(min, max, (max - min) / (points - 1) as f64)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn value(&self, index: usize) -> f64 {
        debug_assert!(index < self.len);
        self.lambda_min + index as f64 * self.eta
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.value(i))
    }

    /// Same grid with every threshold multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.lambda_min * c, self.lambda_max * c, self.eta * c)
    }
}

/// Lower empirical quantile of an ascending slice (`q` in [0, 1]).
pub(crate) fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Counters feeding the anytime confidence width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UcbState {
    /// Sum of importance weights over the active estimation window.
    pub n_o: f64,
    /// Importance-sampled labeled OOD records in the window.
    pub n_imp: u64,
    pub beta_t: f64,
    pub c_t: f64,
    /// Number of deployed scoring functions (starts at 1).
    pub u_t: u64,
    pub t0_reached: bool,
}

impl UcbState {
    /// `n_plain` counts weight-1 records, `n_imp` the weight-`1/p` ones.
    pub fn from_counts(n_plain: u64, n_imp: u64, p: f64, u_t: u64, delta: f64) -> Self {
        let n_o = n_plain as f64 + n_imp as f64 / p;
        let beta_t = if n_o > 0.0 { n_imp as f64 / n_o } else { 0.0 };
        let c_t = 1.0 + (1.0 - p) * beta_t / (p * p);
        Self {
            n_o,
            n_imp,
            beta_t,
            c_t,
            u_t: u_t.max(1),
            t0_reached: c_t * n_o >= t0_level(delta),
        }
    }
}

/// The level `173 ln(4/delta)` that `c_t * N_o` must reach before the
/// LIL bound is valid.
pub fn t0_level(delta: f64) -> f64 {
    173.0 * (4.0 / delta).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn importance_record_weight() {
        let x = FeatureVector::new(vec![0.0]).unwrap();
        assert_eq!(LabeledOodRecord::new(1, x.clone(), true, 0.2).z_weight, 5.0);
        assert_eq!(LabeledOodRecord::new(1, x, false, 0.2).z_weight, 1.0);
    }

    #[test]
    fn feature_vector_rejects_nan() {
        assert!(FeatureVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(FeatureVector::with_dim(vec![1.0, 2.0], 3).is_err());
    }

    #[test]
    fn grid_enumeration() {
        let g = ThresholdGrid::new(0.0, 1.0, 0.1).unwrap();
        assert_eq!(g.len(), 11);
        let v: Vec<f64> = g.values().collect();
        assert!(v.windows(2).all(|w| w[1] > w[0]));
        assert!((v[10] - 1.0).abs() < 1e-12);
        // Last value may stop short of lambda_max by less than eta.
        let g = ThresholdGrid::new(0.0, 1.05, 0.1).unwrap();
        assert_eq!(g.len(), 11);
        assert!(g.lambda_max() - g.value(10) < g.eta());
    }

    #[test]
    fn grid_degenerate_rejected() {
        assert!(ThresholdGrid::new(0.0, 1.0, 0.0).is_err());
        assert!(ThresholdGrid::new(1.0, 1.0, 0.1).is_err());
        assert!(ThresholdGrid::new(0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn grid_from_scores_has_requested_points() {
        let scores: Vec<f64> = (0..5000).map(|i| (i as f64 * 0.37).sin()).collect();
        let g = ThresholdGrid::from_id_scores(&scores, 1001).unwrap();
        assert_eq!(g.len(), 1001);
        assert!(g.lambda_min() < -0.99 && g.lambda_max() > 0.99);
    }

    #[test]
    fn ucb_counters() {
        let s = UcbState::from_counts(10, 0, 0.2, 1, 0.05);
        assert_eq!(s.c_t, 1.0);
        assert_eq!(s.n_o, 10.0);
        let s = UcbState::from_counts(10, 2, 0.2, 1, 0.05);
        assert_eq!(s.n_o, 20.0);
        assert!((s.beta_t - 0.1).abs() < 1e-15);
        assert!((s.c_t - (1.0 + 0.8 * 0.1 / 0.04)).abs() < 1e-12);
        assert!(!s.t0_reached);
        // 173 ln 80 ~ 758.1
        assert!((t0_level(0.05) - 758.1).abs() < 0.1);
        assert!(UcbState::from_counts(759, 0, 0.2, 1, 0.05).t0_reached);
        assert!(!UcbState::from_counts(758, 0, 0.2, 1, 0.05).t0_reached);
    }
}
