//! FPR and TPR estimators, their sigmoid surrogates and the labeled OOD
//! buffer.

use std::collections::VecDeque;

use crate::domain::{FeatureVector, LabeledOodRecord, UcbState};
use crate::error::{Error, Result};
use crate::scorefn::ScoringFunction;

/// `sigma(kappa, z) = 1 / (1 + exp(-kappa z))`, evaluated without overflow.
pub fn sigmoid(kappa: f64, z: f64) -> f64 {
    let u = kappa * z;
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Labeled OOD records, optionally capped to the most recent `window`.
#[derive(Debug, Clone, Default)]
pub struct OodBuffer {
    records: VecDeque<LabeledOodRecord>,
    window: Option<usize>,
    n_imp: u64,
    n_plain: u64,
}

impl OodBuffer {
    pub fn new(window: Option<usize>) -> Self {
        Self {
            records: VecDeque::new(),
            window,
            n_imp: 0,
            n_plain: 0,
        }
    }

    /// Appends `rec` and returns the record evicted by the window, if any.
    pub fn push(&mut self, rec: LabeledOodRecord) -> Option<LabeledOodRecord> {
        self.count(&rec, true);
        self.records.push_back(rec);
        match self.window {
            Some(w) if self.records.len() > w => {
                let old = self.records.pop_front()?;
                self.count(&old, false);
                Some(old)
            }
            _ => None,
        }
    }

    fn count(&mut self, rec: &LabeledOodRecord, add: bool) {
        let slot = if rec.via_importance {
            &mut self.n_imp
        } else {
            &mut self.n_plain
        };
        if add {
            *slot += 1;
        } else {
            *slot -= 1;
        }
    }

    pub fn records(&self) -> impl ExactSizeIterator<Item = &LabeledOodRecord> + Clone {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn window(&self) -> Option<usize> {
        self.window
    }

    pub fn n_imp(&self) -> u64 {
        self.n_imp
    }

    pub fn n_plain(&self) -> u64 {
        self.n_plain
    }

    /// Sum of importance weights over the retained records.
    pub fn total_weight(&self) -> f64 {
        self.records.iter().map(|r| r.z_weight).sum()
    }

    pub fn ucb_state(&self, p: f64, u_t: u64, delta: f64) -> UcbState {
        UcbState::from_counts(self.n_plain, self.n_imp, p, u_t, delta)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.z_weight).collect()
    }

    pub fn scores(&self, g: &ScoringFunction) -> Result<Vec<f64>> {
        self.records.iter().map(|r| g.score(&r.x)).collect()
    }
}

/// The fixed ID sample drawn before deployment.
#[derive(Debug, Clone)]
pub struct IdScoreSet {
    features: Vec<FeatureVector>,
}

impl IdScoreSet {
    pub fn new(features: Vec<FeatureVector>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyIdSet);
        }
        Ok(Self { features })
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn scores(&self, g: &ScoringFunction) -> Result<Vec<f64>> {
        self.features.iter().map(|x| g.score(x)).collect()
    }
}

/// Weighted exceedance fraction over precomputed scores.
pub fn fpr_hat_scores(scores: &[f64], weights: &[f64], lambda: f64) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyBuffer);
    }
    let above: f64 = scores
        .iter()
        .zip(weights)
        .filter(|(s, _)| **s > lambda)
        .map(|(_, w)| *w)
        .sum();
    Ok(above / total)
}

pub fn fpr_hat(buffer: &OodBuffer, g: &ScoringFunction, lambda: f64) -> Result<f64> {
    fpr_hat_scores(&buffer.scores(g)?, &buffer.weights(), lambda)
}

/// Fraction of scores strictly above `lambda`.
pub fn tpr_hat_scores(scores: &[f64], lambda: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyIdSet);
    }
    let above = scores.iter().filter(|s| **s > lambda).count();
    Ok(above as f64 / scores.len() as f64)
}

pub fn tpr_hat(ids: &IdScoreSet, g: &ScoringFunction, lambda: f64) -> Result<f64> {
    tpr_hat_scores(&ids.scores(g)?, lambda)
}

pub fn fpr_tilde_scores(scores: &[f64], weights: &[f64], lambda: f64, kappa: f64) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyBuffer);
    }
    let s: f64 = scores
        .iter()
        .zip(weights)
        .map(|(s, w)| w * sigmoid(kappa, s - lambda))
        .sum();
    Ok(s / total)
}

pub fn fpr_tilde(buffer: &OodBuffer, g: &ScoringFunction, lambda: f64, kappa: f64) -> Result<f64> {
    fpr_tilde_scores(&buffer.scores(g)?, &buffer.weights(), lambda, kappa)
}

pub fn tpr_tilde_scores(scores: &[f64], lambda: f64, kappa: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyIdSet);
    }
    let s: f64 = scores.iter().map(|s| sigmoid(kappa, s - lambda)).sum();
    Ok(s / scores.len() as f64)
}

pub fn tpr_tilde(ids: &IdScoreSet, g: &ScoringFunction, lambda: f64, kappa: f64) -> Result<f64> {
    tpr_tilde_scores(&ids.scores(g)?, lambda, kappa)
}

/// Buffer scores kept sorted, split by weight class, so that the weighted
/// exceedance at any threshold costs two binary searches.
#[derive(Debug, Clone, Default)]
pub struct SortedOodScores {
    plain: Vec<f64>,
    imp: Vec<f64>,
    imp_weight: f64,
}

impl SortedOodScores {
    /// `imp_weight` is `1/p`, the weight of every importance-sampled record.
    pub fn new(imp_weight: f64) -> Self {
        Self {
            plain: Vec::new(),
            imp: Vec::new(),
            imp_weight,
        }
    }

    pub fn from_scores(imp_weight: f64, scored: impl IntoIterator<Item = (f64, bool)>) -> Self {
        let mut out = Self::new(imp_weight);
        for (s, via_imp) in scored {
            if via_imp {
                out.imp.push(s);
            } else {
                out.plain.push(s);
            }
        }
        out.plain.sort_by(f64::total_cmp);
        out.imp.sort_by(f64::total_cmp);
        out
    }

    fn side(&mut self, via_imp: bool) -> &mut Vec<f64> {
        if via_imp {
            &mut self.imp
        } else {
            &mut self.plain
        }
    }

    pub fn insert(&mut self, score: f64, via_imp: bool) {
        let v = self.side(via_imp);
        let at = v.partition_point(|x| x.total_cmp(&score).is_lt());
        v.insert(at, score);
    }

    /// Removes one occurrence of `score`; returns whether it was present.
    pub fn remove(&mut self, score: f64, via_imp: bool) -> bool {
        let v = self.side(via_imp);
        let at = v.partition_point(|x| x.total_cmp(&score).is_lt());
        if at < v.len() && v[at].total_cmp(&score).is_eq() {
            v.remove(at);
            true
        } else {
            false
        }
    }

    pub fn len(&self) -> usize {
        self.plain.len() + self.imp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_weight(&self) -> f64 {
        self.plain.len() as f64 + self.imp.len() as f64 * self.imp_weight
    }

    fn above(v: &[f64], lambda: f64) -> usize {
        v.len() - v.partition_point(|x| *x <= lambda)
    }

    /// Weighted exceedance fraction, or `None` when the buffer is empty.
    pub fn fpr_hat(&self, lambda: f64) -> Option<f64> {
        let total = self.total_weight();
        if total <= 0.0 {
            return None;
        }
        let above = Self::above(&self.plain, lambda) as f64
            + Self::above(&self.imp, lambda) as f64 * self.imp_weight;
        Some(above / total)
    }

    /// Weighted `q`-quantile of the scores (lower).
    pub fn weighted_quantile(&self, q: f64) -> Option<f64> {
        let total = self.total_weight();
        if total <= 0.0 {
            return None;
        }
        let target = q.clamp(0.0, 1.0) * total;
        let (mut i, mut j, mut acc) = (0usize, 0usize, 0.0);
        loop {
            let take_plain = match (self.plain.get(i), self.imp.get(j)) {
                (Some(a), Some(b)) => a <= b,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => return self.plain.last().copied().or(self.imp.last().copied()),
            };
            let (s, w) = if take_plain {
                i += 1;
                (self.plain[i - 1], 1.0)
            } else {
                j += 1;
                (self.imp[j - 1], self.imp_weight)
            };
            acc += w;
            if acc >= target {
                return Some(s);
            }
        }
    }
}
