//! Safe threshold selection: the smallest grid value whose inflated FPR
//! estimate stays within `alpha`.

use crate::confidence::{psi, UcbParams};
use crate::domain::{ThresholdGrid, UcbState};
use crate::error::Result;
use crate::estimators::{fpr_hat_scores, OodBuffer, SortedOodScores};
use crate::scorefn::ScoringFunction;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Q1Solution {
    /// `+inf` when infeasible.
    pub lambda: f64,
    pub feasible: bool,
}

impl Q1Solution {
    pub const INFEASIBLE: Self = Self {
        lambda: f64::INFINITY,
        feasible: false,
    };
}

/// Binary search over grid indices. `fpr` returns `None` when the FPR is
/// unestimable.
pub fn solve_q1_with<F>(grid: &ThresholdGrid, psi: f64, alpha: f64, fpr: F) -> Q1Solution
where
    F: Fn(f64) -> Option<f64>,
{
    if !psi.is_finite() {
        return Q1Solution::INFEASIBLE;
    }
    let feasible = |i: usize| fpr(grid.value(i)).is_some_and(|f| f + psi <= alpha);
    let (mut lo, mut hi) = (0usize, grid.len());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    if lo == grid.len() {
        Q1Solution::INFEASIBLE
    } else {
        Q1Solution {
            lambda: grid.value(lo),
            feasible: true,
        }
    }
}

/// Ascending scan; the reference the binary search is tested against.
pub fn solve_q1_linear_with<F>(grid: &ThresholdGrid, psi: f64, alpha: f64, fpr: F) -> Q1Solution
where
    F: Fn(f64) -> Option<f64>,
{
    if !psi.is_finite() {
        return Q1Solution::INFEASIBLE;
    }
    grid.values()
        .find(|l| fpr(*l).is_some_and(|f| f + psi <= alpha))
        .map_or(Q1Solution::INFEASIBLE, |lambda| Q1Solution {
            lambda,
            feasible: true,
        })
}

/// Solves Q1 for scorer `g` on the current buffer.
pub fn solve_q1(
    buffer: &OodBuffer,
    g: &ScoringFunction,
    grid: &ThresholdGrid,
    state: &UcbState,
    params: &UcbParams,
    alpha: f64,
) -> Result<Q1Solution> {
    let width = psi(state, params);
    if buffer.is_empty() || !width.is_finite() {
        return Ok(Q1Solution::INFEASIBLE);
    }
    let imp_weight = buffer
        .records()
        .find(|r| r.via_importance)
        .map_or(1.0, |r| r.z_weight);
    let scored = buffer
        .records()
        .map(|r| Ok((g.score(&r.x)?, r.via_importance)))
        .collect::<Result<Vec<_>>>()?;
    let sorted = SortedOodScores::from_scores(imp_weight, scored);
    Ok(solve_q1_with(grid, width, alpha, |l| sorted.fpr_hat(l)))
}

pub fn solve_q1_linear_oracle(
    buffer: &OodBuffer,
    g: &ScoringFunction,
    grid: &ThresholdGrid,
    state: &UcbState,
    params: &UcbParams,
    alpha: f64,
) -> Result<Q1Solution> {
    let width = psi(state, params);
    if buffer.is_empty() {
        return Ok(Q1Solution::INFEASIBLE);
    }
    let scores = buffer.scores(g)?;
    let weights = buffer.weights();
    Ok(solve_q1_linear_with(grid, width, alpha, |l| {
        fpr_hat_scores(&scores, &weights, l).ok()
    }))
}
