use std::collections::VecDeque;

use crate::confidence::ConfidenceBound;
use crate::config::GridSpec;
use crate::domain::{LabeledOodRecord, ThresholdGrid, UcbState};
use crate::error::Result;
use crate::estimators::{IdScoreSet, OodBuffer, SortedOodScores};
use crate::scorefn::ScoringFunction;
use crate::threshold::{solve_q1_with, Q1Solution};

/// Everything Q1 needs for one scorer: its sorted buffer scores, its ID
/// scores and its grid.
#[derive(Debug, Clone)]
pub struct ScoredView {
    pub sorted: SortedOodScores,
    /// Buffer scores in arrival order, aligned with the buffer records.
    pub in_order: VecDeque<f64>,
    pub id_scores: Vec<f64>,
    pub grid: ThresholdGrid,
}

impl ScoredView {
    pub fn build(
        g: &ScoringFunction,
        buffer: &OodBuffer,
        ids: &IdScoreSet,
        grid: &GridSpec,
        p: f64,
    ) -> Result<Self> {
        let in_order: VecDeque<f64> = buffer
            .records()
            .map(|r| g.score(&r.x))
            .collect::<Result<_>>()?;
        let sorted = SortedOodScores::from_scores(
            1.0 / p,
            in_order
                .iter()
                .zip(buffer.records())
                .map(|(s, r)| (*s, r.via_importance)),
        );
        let id_scores = ids.scores(g)?;
        let grid = grid.resolve(&id_scores)?;
        Ok(Self {
            sorted,
            in_order,
            id_scores,
            grid,
        })
    }
}

/// Labeled OOD buffer plus a cached Q1 solution for the deployed scorer.
pub struct ThresholdTracker {
    buffer: OodBuffer,
    view: ScoredView,
    bound: Box<dyn ConfidenceBound>,
    grid_spec: GridSpec,
    p: f64,
    delta: f64,
    alpha: f64,
    u_t: u64,
    lambda: f64,
    psi: f64,
}

impl ThresholdTracker {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        g: &ScoringFunction,
        ids: &IdScoreSet,
        window: Option<usize>,
        grid_spec: GridSpec,
        bound: Box<dyn ConfidenceBound>,
        p: f64,
        delta: f64,
        alpha: f64,
    ) -> Result<Self> {
        let buffer = OodBuffer::new(window);
        let view = ScoredView::build(g, &buffer, ids, &grid_spec, p)?;
        Ok(Self {
            buffer,
            view,
            bound,
            grid_spec,
            p,
            delta,
            alpha,
            u_t: 1,
            lambda: f64::INFINITY,
            psi: f64::INFINITY,
        })
    }

    pub fn buffer(&self) -> &OodBuffer {
        &self.buffer
    }

    pub fn view(&self) -> &ScoredView {
        &self.view
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn u_t(&self) -> u64 {
        self.u_t
    }

    pub fn ucb_state(&self) -> UcbState {
        self.buffer.ucb_state(self.p, self.u_t, self.delta)
    }

    /// Adds a record scored under the deployed `g`.
    pub fn push(&mut self, rec: LabeledOodRecord, g: &ScoringFunction) -> Result<()> {
        let score = g.score(&rec.x)?;
        let via_imp = rec.via_importance;
        if let Some(old) = self.buffer.push(rec) {
            let old_score = self.view.in_order.pop_front().unwrap_or(f64::NAN);
            let removed = self.view.sorted.remove(old_score, old.via_importance);
            debug_assert!(removed);
        }
        self.view.in_order.push_back(score);
        self.view.sorted.insert(score, via_imp);
        Ok(())
    }

    fn solve(&self, view: &ScoredView, u_t: u64) -> (Q1Solution, f64) {
        let state = self.buffer.ucb_state(self.p, u_t, self.delta);
        let psi = self.bound.psi(&state, view.grid.len());
        let sol = solve_q1_with(&view.grid, psi, self.alpha, |l| view.sorted.fpr_hat(l));
        if sol.feasible {
            debug_assert!(view.sorted.fpr_hat(sol.lambda).unwrap_or(1.0) + psi <= self.alpha);
        }
        (sol, psi)
    }

    /// Re-solves Q1 for the deployed scorer.
    pub fn resolve(&mut self) -> Q1Solution {
        let (sol, psi) = self.solve(&self.view, self.u_t);
        self.lambda = sol.lambda;
        self.psi = psi;
        sol
    }

    /// Scores the buffer and ID set under a candidate and solves Q1 as if
    /// it were the next deployed scorer (`U_t + 1`).
    pub fn evaluate_candidate(
        &self,
        g: &ScoringFunction,
        ids: &IdScoreSet,
    ) -> Result<(ScoredView, Q1Solution, f64)> {
        let view = ScoredView::build(g, &self.buffer, ids, &self.grid_spec, self.p)?;
        let (sol, psi) = self.solve(&view, self.u_t + 1);
        Ok((view, sol, psi))
    }

    /// Deploys a candidate evaluated by [`Self::evaluate_candidate`].
    pub fn adopt(&mut self, view: ScoredView, sol: Q1Solution, psi: f64) {
        self.view = view;
        self.u_t += 1;
        self.lambda = sol.lambda;
        self.psi = psi;
    }
}
