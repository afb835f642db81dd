use asat::domain::Label;
use asat::engine::StepOutcome;
use asat::metrics::{eval_fpr_tpr, violation_report, EvalCounts, EvalWindow, LabelSource, PrefixCounts};
use proptest::prelude::*;

fn outcome(t: u64, predicted: Label, emitted: Label) -> StepOutcome {
    StepOutcome {
        t,
        score: 0.0,
        predicted,
        queried: false,
        via_importance: false,
        true_label: None,
        emitted,
        threshold: 0.0,
        g_version: 1,
        update: None,
    }
}

fn label(b: bool) -> Label {
    if b {
        Label::Id
    } else {
        Label::Ood
    }
}

proptest! {
    #[test]
    fn disjoint_windows_add_up_to_totals(
        rows in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..400),
        width in 1u64..50,
    ) {
        for source in [LabelSource::Predicted, LabelSource::Emitted] {
            let mut counts = PrefixCounts::new(source);
            let mut steps = Vec::new();
            let mut truth = Vec::new();
            let mut direct = EvalCounts::default();
            for (i, (y, pred, emit)) in rows.iter().enumerate() {
                let o = outcome(i as u64 + 1, label(*pred), label(*emit));
                counts.push(&o, label(*y));
                direct.record(label(*y), source.pick(&o));
                steps.push(o);
                truth.push(label(*y));
            }
            let t = rows.len() as u64;
            prop_assert_eq!(counts.window(t, EvalWindow::All), direct);

            // Windows `[t - width, t]` stepping down by `width + 1` tile 1..=t.
            let mut sum = EvalCounts::default();
            let mut end = t;
            loop {
                sum += counts.window(end, EvalWindow::Last(width));
                if end <= width + 1 {
                    break;
                }
                end -= width + 1;
            }
            prop_assert_eq!(sum, direct);

            let (f, r) = eval_fpr_tpr(&steps, &truth, t, EvalWindow::Last(width), source);
            let w = counts.window(t, EvalWindow::Last(width));
            prop_assert_eq!(f, w.fpr());
            prop_assert_eq!(r, w.tpr());
        }
    }

    #[test]
    fn recovery_follows_the_last_violation(
        fprs in prop::collection::vec(0.0f64..0.2, 1..60),
    ) {
        let curve: Vec<(u64, f64)> = fprs.iter().enumerate().map(|(i, f)| (i as u64 * 10 + 1, *f)).collect();
        let rep = violation_report(&curve, 0.05, Some(1), &[1]);
        prop_assert_eq!(rep.len(), 1);
        let v = &rep[0];
        let last_bad = curve.iter().rposition(|(_, f)| *f > 0.05);
        match last_bad {
            None => {
                prop_assert_eq!(v.max_violation, 0.0);
                prop_assert_eq!(v.recovery_step, Some(1));
            }
            Some(i) if i + 1 == curve.len() => prop_assert_eq!(v.recovery_step, None),
            Some(i) => prop_assert_eq!(v.recovery_step, Some(curve[i + 1].0)),
        }
        let worst = fprs.iter().map(|f| f - 0.05).fold(0.0, f64::max);
        prop_assert!((v.max_violation - worst).abs() < 1e-15);
    }
}
