use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runio::rng::SimRng;

/// `g(x) = w2 . relu(W1 x)` with `W1` stored row-major as `h x d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerScorer {
    dim: usize,
    hidden: usize,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

impl TwoLayerScorer {
    pub fn new(dim: usize, hidden: usize, w1: Vec<f64>, w2: Vec<f64>) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(Error::config("network dimensions must be positive"));
        }
        if w1.len() != dim * hidden {
            return Err(Error::DimensionMismatch {
                expected: dim * hidden,
                got: w1.len(),
            });
        }
        if w2.len() != hidden {
            return Err(Error::DimensionMismatch {
                expected: hidden,
                got: w2.len(),
            });
        }
        if w1.iter().chain(&w2).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(Self {
            dim,
            hidden,
            w1,
            w2,
        })
    }

    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            dim,
            hidden,
            w1: vec![0.0; dim * hidden],
            w2: vec![0.0; hidden],
        }
    }

    /// Entries uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, `W1` first
    /// in row-major order, then `w2`.
    pub fn random(dim: usize, hidden: usize, rng: &mut SimRng) -> Self {
        let b1 = 1.0 / (dim as f64).sqrt();
        let b2 = 1.0 / (hidden as f64).sqrt();
        let w1 = (0..dim * hidden).map(|_| rng.uniform_in(-b1, b1)).collect();
        let w2 = (0..hidden).map(|_| rng.uniform_in(-b2, b2)).collect();
        Self {
            dim,
            hidden,
            w1,
            w2,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn w1(&self) -> &[f64] {
        &self.w1
    }

    pub fn w2(&self) -> &[f64] {
        &self.w2
    }

    pub fn w1_mut(&mut self) -> &mut [f64] {
        &mut self.w1
    }

    pub fn w2_mut(&mut self) -> &mut [f64] {
        &mut self.w2
    }

    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.w1, &mut self.w2)
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.w2.len()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.w2).all(|v| v.is_finite())
    }

    /// Scores a raw slice; the caller guarantees `x.len() == dim`.
    #[inline]
    pub fn score_slice(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut g = 0.0;
        for (row, w2j) in self.w1.chunks_exact(self.dim).zip(&self.w2) {
            let a: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            if a > 0.0 {
                g += w2j * a;
            }
        }
        g
    }

    /// Forward pass that keeps the pre-activations in `pre` (length h).
    #[inline]
    pub(crate) fn forward_into(&self, x: &[f64], pre: &mut [f64]) -> f64 {
        let mut g = 0.0;
        for ((row, w2j), a_out) in self.w1.chunks_exact(self.dim).zip(&self.w2).zip(pre.iter_mut()) {
            let a: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            *a_out = a;
            if a > 0.0 {
                g += w2j * a;
            }
        }
        g
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Copy with `w2` multiplied by `c`, which multiplies every score by `c`.
    pub fn scaled_output(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.w2.iter_mut().for_each(|w| *w *= c);
        out
    }
}
