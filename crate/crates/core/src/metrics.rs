//! Windowed evaluation rates and FPR violation accounting.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::domain::Label;
use crate::engine::StepOutcome;

/// Span of past steps counted by the evaluation rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalWindow {
    All,
    /// Steps `[t - n, t]`.
    Last(u64),
}

impl EvalWindow {
    pub fn from_option(n: Option<u64>) -> Self {
        n.map_or(Self::All, Self::Last)
    }

    pub fn first_step(self, t: u64) -> u64 {
        match self {
            Self::All => 1,
            Self::Last(n) => t.saturating_sub(n).max(1),
        }
    }
}

/// Which decision counts as the system's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    /// The thresholded prediction.
    #[default]
    Predicted,
    /// The human label when queried, else the prediction.
    Emitted,
}

impl LabelSource {
    pub fn pick(self, step: &StepOutcome) -> Label {
        match self {
            Self::Predicted => step.predicted,
            Self::Emitted => step.emitted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalCounts {
    pub ood: u64,
    /// OOD instances output as ID.
    pub false_pos: u64,
    pub id: u64,
    /// ID instances output as ID.
    pub true_pos: u64,
}

impl EvalCounts {
    pub fn record(&mut self, y_true: Label, output: Label) {
        let hit = u64::from(output == Label::Id);
        match y_true {
            Label::Ood => {
                self.ood += 1;
                self.false_pos += hit;
            }
            Label::Id => {
                self.id += 1;
                self.true_pos += hit;
            }
        }
    }

    /// `None` without OOD instances.
    pub fn fpr(&self) -> Option<f64> {
        (self.ood > 0).then(|| self.false_pos as f64 / self.ood as f64)
    }

    /// `None` without ID instances.
    pub fn tpr(&self) -> Option<f64> {
        (self.id > 0).then(|| self.true_pos as f64 / self.id as f64)
    }

    fn minus(self, other: Self) -> Self {
        Self {
            ood: self.ood - other.ood,
            false_pos: self.false_pos - other.false_pos,
            id: self.id - other.id,
            true_pos: self.true_pos - other.true_pos,
        }
    }
}

impl Add for EvalCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            ood: self.ood + o.ood,
            false_pos: self.false_pos + o.false_pos,
            id: self.id + o.id,
            true_pos: self.true_pos + o.true_pos,
        }
    }
}

impl AddAssign for EvalCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Cumulative counts over steps `1..=t`, answering any window in O(1).
#[derive(Debug, Clone)]
pub struct PrefixCounts {
    source: LabelSource,
    // prefix[k] covers steps 1..=k.
    prefix: Vec<EvalCounts>,
}

impl PrefixCounts {
    pub fn new(source: LabelSource) -> Self {
        Self {
            source,
            prefix: vec![EvalCounts::default()],
        }
    }

    /// Appends the next step; steps must arrive as `1, 2, ...`.
    pub fn push(&mut self, step: &StepOutcome, y_true: Label) {
        debug_assert_eq!(step.t as usize, self.prefix.len());
        let mut c = *self.prefix.last().expect("prefix starts non-empty");
        c.record(y_true, self.source.pick(step));
        self.prefix.push(c);
    }

    pub fn last_step(&self) -> u64 {
        (self.prefix.len() - 1) as u64
    }

    /// Counts over the window ending at `t`.
    pub fn window(&self, t: u64, window: EvalWindow) -> EvalCounts {
        let t = t.min(self.last_step());
        if t == 0 {
            return EvalCounts::default();
        }
        let first = window.first_step(t);
        self.prefix[t as usize].minus(self.prefix[first as usize - 1])
    }
}

/// Evaluation FPR and TPR at step `t`; `None` marks an empty denominator.
pub fn eval_fpr_tpr(
    steps: &[StepOutcome],
    truth: &[Label],
    t: u64,
    window: EvalWindow,
    source: LabelSource,
) -> (Option<f64>, Option<f64>) {
    let first = window.first_step(t);
    let mut c = EvalCounts::default();
    for (s, y) in steps.iter().zip(truth) {
        if s.t >= first && s.t <= t {
            c.record(*y, source.pick(s));
        }
    }
    (c.fpr(), c.tpr())
}

/// FPR exceedances within one OOD phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseViolation {
    pub phase_start: u64,
    /// Largest `fpr - alpha` over the phase's checked points, floored at 0.
    pub max_violation: f64,
    pub violation_steps: Vec<u64>,
    /// First checkpoint after the last violation in the phase; the phase
    /// start when nothing was violated; `None` when the phase ends violating.
    pub recovery_step: Option<u64>,
}

/// Splits a truth curve `(t, fpr)` at `phase_starts` and reports each phase.
/// Checkpoints before `t0` are ignored (`None` ignores everything).
pub fn violation_report(
    curve: &[(u64, f64)],
    alpha: f64,
    t0: Option<u64>,
    phase_starts: &[u64],
) -> Vec<PhaseViolation> {
    let starts: Vec<u64> = if phase_starts.is_empty() {
        vec![1]
    } else {
        phase_starts.to_vec()
    };
    starts
        .iter()
        .enumerate()
        .map(|(k, &start)| {
            let end = starts.get(k + 1).copied().unwrap_or(u64::MAX);
            let from = t0.map_or(u64::MAX, |t0| t0.max(start));
            let pts: Vec<(u64, f64)> = curve
                .iter()
                .copied()
                .filter(|(t, _)| *t >= from && *t < end)
                .collect();
            let mut max_violation: f64 = 0.0;
            let mut violation_steps = Vec::new();
            let mut last_bad = None;
            for (i, (t, f)) in pts.iter().enumerate() {
                if *f > alpha {
                    max_violation = max_violation.max(f - alpha);
                    violation_steps.push(*t);
                    last_bad = Some(i);
                }
            }
            let recovery_step = match last_bad {
                None => Some(start),
                Some(i) => pts.get(i + 1).map(|(t, _)| *t),
            };
            PhaseViolation {
                phase_start: start,
                max_violation,
                violation_steps,
                recovery_step,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(t: u64, predicted: Label, emitted: Label) -> StepOutcome {
        StepOutcome {
            t,
            score: 0.0,
            predicted,
            queried: predicted != emitted,
            via_importance: false,
            true_label: None,
            emitted,
            threshold: 0.0,
            g_version: 1,
            update: None,
        }
    }

    #[test]
    fn counting() {
        use Label::*;
        let mut steps = Vec::new();
        let mut truth = Vec::new();
        for t in 1..=10 {
            let p = if t == 3 { Id } else { Ood };
            steps.push(step(t, p, p));
            truth.push(Ood);
        }
        let (f, t) = eval_fpr_tpr(&steps, &truth, 10, EvalWindow::All, LabelSource::Predicted);
        assert_eq!(f, Some(0.1));
        assert_eq!(t, None);
    }

    #[test]
    fn emitted_labels_hide_queried_false_positives() {
        use Label::*;
        // t=2 is an OOD predicted ID but queried, so emitted OOD.
        let steps = vec![
            step(1, Ood, Ood),
            step(2, Id, Ood),
            step(3, Id, Id),
            step(4, Ood, Id),
            step(5, Id, Id),
        ];
        let truth = vec![Ood, Ood, Ood, Id, Id];
        let pred = eval_fpr_tpr(&steps, &truth, 5, EvalWindow::All, LabelSource::Predicted);
        let emit = eval_fpr_tpr(&steps, &truth, 5, EvalWindow::All, LabelSource::Emitted);
        assert_eq!(pred, (Some(2.0 / 3.0), Some(0.5)));
        assert_eq!(emit, (Some(1.0 / 3.0), Some(1.0)));
    }

    #[test]
    fn prefix_windows_match_direct_and_reassemble() {
        use Label::*;
        let mut pc = PrefixCounts::new(LabelSource::Predicted);
        let mut steps = Vec::new();
        let mut truth = Vec::new();
        for t in 1..=50u64 {
            let y = if t % 3 == 0 { Ood } else { Id };
            let p = if t % 4 == 0 { Ood } else { Id };
            let s = step(t, p, p);
            pc.push(&s, y);
            steps.push(s);
            truth.push(y);
        }
        for t in [1, 9, 30, 50] {
            for w in [EvalWindow::All, EvalWindow::Last(0), EvalWindow::Last(7)] {
                let c = pc.window(t, w);
                assert_eq!(
                    (c.fpr(), c.tpr()),
                    eval_fpr_tpr(&steps, &truth, t, w, LabelSource::Predicted)
                );
            }
        }
        // [1, 20] + [21, 50] = all.
        let sum = pc.window(20, EvalWindow::Last(19)) + pc.window(50, EvalWindow::Last(29));
        assert_eq!(sum, pc.window(50, EvalWindow::All));
    }

    #[test]
    fn empty_window_is_undefined() {
        let c = EvalCounts::default();
        assert_eq!(c.fpr(), None);
        assert_eq!(c.tpr(), None);
    }

    #[test]
    fn violations() {
        let safe = vec![(100, 0.01), (200, 0.04)];
        let r = violation_report(&safe, 0.05, Some(1), &[1]);
        assert_eq!(r[0].max_violation, 0.0);
        assert_eq!(r[0].recovery_step, Some(1));

        let curve = vec![(100, 0.02), (200, 0.08), (300, 0.08), (400, 0.03)];
        let r = violation_report(&curve, 0.05, Some(1), &[1]);
        assert!((r[0].max_violation - 0.03).abs() < 1e-12);
        assert_eq!(r[0].violation_steps, vec![200, 300]);
        assert_eq!(r[0].recovery_step, Some(400));

        // Pre-t0 points are ignored.
        let r = violation_report(&curve, 0.05, Some(350), &[1]);
        assert!(r[0].violation_steps.is_empty());
        assert_eq!(violation_report(&curve, 0.05, None, &[1])[0].violation_steps.len(), 0);
    }

    #[test]
    fn per_phase_reports() {
        let curve = vec![
            (10, 0.01),
            (20, 0.2),
            (30, 0.01),
            (40, 0.3),
            (50, 0.1),
            (60, 0.02),
            (70, 0.4),
        ];
        let r = violation_report(&curve, 0.05, Some(1), &[1, 40, 70]);
        assert_eq!(r.len(), 3);
        assert_eq!(r[0].violation_steps, vec![20]);
        assert_eq!(r[0].recovery_step, Some(30));
        assert_eq!(r[1].violation_steps, vec![40, 50]);
        assert_eq!(r[1].recovery_step, Some(60));
        assert!((r[1].max_violation - 0.25).abs() < 1e-12);
        assert_eq!(r[2].recovery_step, None);
    }
}
