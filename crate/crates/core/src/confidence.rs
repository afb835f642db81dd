//! Anytime confidence widths for the FPR estimate and the DKW width for
//! the TPR estimate.

use crate::config::{HeuristicConstants, UcbMode};
use crate::domain::UcbState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UcbParams {
    pub mode: UcbMode,
    pub delta: f64,
    pub constants: HeuristicConstants,
    pub grid_size: usize,
}

/// LIL width, `+inf` before `t0` or while the log-log term is undefined.
pub fn psi_theoretical(state: &UcbState, params: &UcbParams) -> f64 {
    let (c, n) = (state.c_t, state.n_o);
    if !state.t0_reached || n <= 0.0 {
        return f64::INFINITY;
    }
    let inner = 3.0 * c * n / 2.0;
    if inner <= 1.0 {
        return f64::INFINITY;
    }
    let u = state.u_t.max(1) as f64;
    let union = 4.0 * u * params.grid_size as f64 / params.delta;
    let bracket = 2.0 * inner.ln().ln() + 2.0 * union.ln();
    (3.0 * c / n * bracket).max(0.0).sqrt()
}

/// Heuristic width, `+inf` while `c2 c_t N` is at most `e`.
pub fn psi_heuristic(state: &UcbState, params: &UcbParams) -> f64 {
    let HeuristicConstants { c1, c2, c3 } = params.constants;
    let (c, n) = (state.c_t, state.n_o);
    let inner = c2 * c * n;
    if n <= 0.0 || inner <= std::f64::consts::E {
        return f64::INFINITY;
    }
    let bracket = inner.ln().ln() + (c3 / params.delta).ln();
    c1 * (c / n * bracket).max(0.0).sqrt()
}

pub fn psi(state: &UcbState, params: &UcbParams) -> f64 {
    match params.mode {
        UcbMode::Theoretical => psi_theoretical(state, params),
        UcbMode::Heuristic => psi_heuristic(state, params),
    }
}

/// Half-width `sqrt(ln(2/delta) / n)` of the DKW band.
pub fn dkw_interval(delta: f64, n_id: usize) -> f64 {
    ((2.0 / delta).ln() / n_id.max(1) as f64).sqrt()
}

/// A named confidence width, selectable at runtime.
pub trait ConfidenceBound: Send + Sync {
    fn name(&self) -> &'static str;
    fn psi(&self, state: &UcbState, grid_size: usize) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct TheoreticalBound {
    pub delta: f64,
}

impl ConfidenceBound for TheoreticalBound {
    fn name(&self) -> &'static str {
        "theoretical"
    }

    fn psi(&self, state: &UcbState, grid_size: usize) -> f64 {
        psi_theoretical(
            state,
            &UcbParams {
                mode: UcbMode::Theoretical,
                delta: self.delta,
                constants: HeuristicConstants::ASAT,
                grid_size,
            },
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeuristicBound {
    pub delta: f64,
    pub constants: HeuristicConstants,
}

impl ConfidenceBound for HeuristicBound {
    fn name(&self) -> &'static str {
        "heuristic"
    }

    fn psi(&self, state: &UcbState, grid_size: usize) -> f64 {
        psi_heuristic(
            state,
            &UcbParams {
                mode: UcbMode::Heuristic,
                delta: self.delta,
                constants: self.constants,
                grid_size,
            },
        )
    }
}

type BoundFactory = fn(f64, HeuristicConstants) -> Box<dyn ConfidenceBound>;

const BOUNDS: &[(&str, BoundFactory)] = &[
    ("theoretical", |delta, _| Box::new(TheoreticalBound { delta })),
    ("heuristic", |delta, constants| {
        Box::new(HeuristicBound { delta, constants })
    }),
];

pub fn bound_names() -> impl Iterator<Item = &'static str> {
    BOUNDS.iter().map(|(n, _)| *n)
}

/// Looks up a confidence width by name.
pub fn make_bound(
    name: &str,
    delta: f64,
    constants: HeuristicConstants,
) -> Result<Box<dyn ConfidenceBound>> {
    BOUNDS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, f)| f(delta, constants))
        .ok_or_else(|| Error::UnknownName {
            kind: "confidence bound",
            name: name.to_string(),
            known: bound_names().collect::<Vec<_>>().join(", "),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::t0_level;
    use proptest::prelude::*;

    fn state(c_t: f64, n_o: f64, u_t: u64) -> UcbState {
        UcbState {
            n_o,
            n_imp: 0,
            beta_t: 0.0,
            c_t,
            u_t,
            t0_reached: c_t * n_o >= t0_level(0.05),
        }
    }

    fn params(mode: UcbMode) -> UcbParams {
        UcbParams {
            mode,
            delta: 0.05,
            constants: HeuristicConstants::ASAT,
            grid_size: 1001,
        }
    }

    #[test]
    fn theoretical_infinite_before_t0() {
        let s = state(1.0, 700.0, 1);
        assert!(!s.t0_reached);
        assert_eq!(psi_theoretical(&s, &params(UcbMode::Theoretical)), f64::INFINITY);
    }

    #[test]
    fn theoretical_matches_transcription() {
        let s = state(11.0, 2000.0, 3);
        let got = psi_theoretical(&s, &params(UcbMode::Theoretical));
        // Written out term by term: 3*11/2000 * (2 ln ln 33000 + 2 ln(4*3*1001/0.05)).
        let lnln = (33000.0f64).ln().ln();
        let lnu = (240240.0f64).ln();
        let want = (0.0165 * (2.0 * lnln + 2.0 * lnu)).sqrt();
        assert!(got.is_finite());
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn heuristic_worked_example() {
        let s = state(11.0, 1000.0, 1);
        let got = psi_heuristic(&s, &params(UcbMode::Heuristic));
        let want = 0.65 * (0.011 * ((8250.0f64).ln().ln() + (20.0f64).ln())).sqrt();
        assert!((got - want).abs() < 1e-12);
        assert!((got - 0.155).abs() < 5e-4);
    }

    #[test]
    fn heuristic_small_n_is_infinite() {
        let s = state(1.0, 3.0, 1);
        assert_eq!(psi_heuristic(&s, &params(UcbMode::Heuristic)), f64::INFINITY);
    }

    #[test]
    fn heuristic_decays_to_zero() {
        let p = params(UcbMode::Heuristic);
        assert!(psi_heuristic(&state(1.0, 1e12, 1), &p) < 1e-5);
    }

    #[test]
    fn dkw_examples() {
        let z = dkw_interval(0.05, 10_000);
        assert!((z - ((40.0f64).ln() / 10_000.0).sqrt()).abs() < 1e-15);
        assert!((z - 0.01921).abs() < 1e-5);
        assert_eq!(dkw_interval(2.0, 10), 0.0);
        let ratio = dkw_interval(0.05, 2000) / dkw_interval(0.05, 1000);
        assert!((ratio - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn registry_lookup() {
        let b = make_bound("heuristic", 0.05, HeuristicConstants::FSAT).unwrap();
        assert_eq!(b.name(), "heuristic");
        assert!(make_bound("bernstein", 0.05, HeuristicConstants::ASAT).is_err());
        let s = state(1.0, 5000.0, 1);
        let t = make_bound("theoretical", 0.05, HeuristicConstants::ASAT).unwrap();
        assert_eq!(t.psi(&s, 1001), psi_theoretical(&s, &params(UcbMode::Theoretical)));
    }

    proptest! {
        #[test]
        fn widths_monotone(
            c in 1.0f64..30.0,
            dc in 0.01f64..5.0,
            n in 800.0f64..1e6,
            dn in 1.0f64..1e5,
            u in 1u64..50,
        ) {
            let pt = params(UcbMode::Theoretical);
            let ph = params(UcbMode::Heuristic);
            let base = state(c, n, u);
            for p in [&pt, &ph] {
                let f = |s: &UcbState| psi(s, p);
                prop_assert!(f(&state(c + dc, n, u)) >= f(&base));
                prop_assert!(f(&state(c, n + dn, u)) <= f(&base));
            }
            prop_assert!(psi(&state(c, n, u + 1), &pt) > psi(&base, &pt));
            prop_assert!(psi(&base, &ph) < psi(&base, &pt));
        }
    }
}
