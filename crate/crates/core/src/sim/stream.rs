use crate::domain::{Label, StreamSample};
use crate::error::{Error, Result};
use crate::runio::rng::SimRng;
use crate::sim::distribution::ComponentDistribution;

/// An OOD component active from step `start` until the next phase begins.
#[derive(Debug, Clone, PartialEq)]
pub struct OodPhase {
    pub start: u64,
    pub dist: ComponentDistribution,
}

/// Stream `x_t ~ gamma * D0(t) + (1 - gamma) * D1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub id_dist: ComponentDistribution,
    pub ood_phases: Vec<OodPhase>,
    pub gamma: f64,
    pub horizon: u64,
    pub seed: u64,
}

impl StreamSpec {
    pub fn stationary(
        id_dist: ComponentDistribution,
        ood: ComponentDistribution,
        gamma: f64,
        horizon: u64,
        seed: u64,
    ) -> Result<Self> {
        Self {
            id_dist,
            ood_phases: vec![OodPhase { start: 1, dist: ood }],
            gamma,
            horizon,
            seed,
        }
        .validate()
    }

    pub fn validate(self) -> Result<Self> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("gamma must lie in [0,1]"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be positive"));
        }
        match self.ood_phases.first() {
            Some(p) if p.start == 1 => {}
            _ => return Err(Error::config("the first OOD phase must start at step 1")),
        }
        if self.ood_phases.windows(2).any(|w| w[1].start <= w[0].start) {
            return Err(Error::config("OOD phase starts must be strictly increasing"));
        }
        let d = self.id_dist.dim();
        for p in &self.ood_phases {
            if p.dist.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.dist.dim(),
                });
            }
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.id_dist.dim()
    }

    /// Index of the OOD phase active at step `t`.
    pub fn phase_at(&self, t: u64) -> usize {
        self.ood_phases
            .partition_point(|p| p.start <= t)
            .saturating_sub(1)
    }

    /// Phase start steps after the first.
    pub fn shift_steps(&self) -> Vec<u64> {
        self.ood_phases.iter().skip(1).map(|p| p.start).collect()
    }

    pub fn generator(&self) -> StreamGenerator<'_> {
        StreamGenerator {
            spec: self,
            rng: SimRng::new(self.seed),
            t: 0,
        }
    }
}

/// Draws samples `1..=horizon`. Each step consumes one uniform for the
/// source choice followed by the component draw.
pub struct StreamGenerator<'a> {
    spec: &'a StreamSpec,
    rng: SimRng,
    t: u64,
}

impl StreamGenerator<'_> {
    pub fn next_sample(&mut self) -> Option<StreamSample> {
        if self.t >= self.spec.horizon {
            return None;
        }
        self.t += 1;
        let t = self.t;
        let ood = self.rng.uniform() < self.spec.gamma;
        let (dist, y_true) = if ood {
            (&self.spec.ood_phases[self.spec.phase_at(t)].dist, Label::Ood)
        } else {
            (&self.spec.id_dist, Label::Id)
        };
        Some(StreamSample {
            t,
            x: dist.sample(&mut self.rng),
            y_true,
        })
    }
}

impl Iterator for StreamGenerator<'_> {
    type Item = StreamSample;

    fn next(&mut self) -> Option<StreamSample> {
        self.next_sample()
    }
}

/// Noiseless oracle: returns the sample's true label and counts queries.
#[derive(Debug, Default, Clone)]
pub struct SimOracle {
    pub queries: u64,
}

impl crate::engine::LabelOracle for SimOracle {
    fn label(&mut self, sample: &StreamSample) -> Result<Label> {
        self.queries += 1;
        Ok(sample.y_true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::LabelOracle;
    use crate::sim::distribution::Gaussian;

    fn comp(m: f64) -> ComponentDistribution {
        ComponentDistribution::Gaussian(Gaussian::isotropic(vec![m, 0.0]).unwrap())
    }

    fn spec(gamma: f64) -> StreamSpec {
        StreamSpec {
            id_dist: comp(0.0),
            ood_phases: vec![
                OodPhase { start: 1, dist: comp(-100.0) },
                OodPhase { start: 501, dist: comp(100.0) },
            ],
            gamma,
            horizon: 1000,
            seed: 4,
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn zero_gamma_is_all_id() {
        assert!(spec(0.0).generator().all(|s| s.y_true == Label::Id));
    }

    #[test]
    fn ood_rate_concentrates() {
        let mut s = spec(0.2);
        s.horizon = 10_000;
        let n = s.generator().filter(|x| x.y_true == Label::Ood).count() as f64;
        let se = (10_000.0 * 0.2 * 0.8f64).sqrt();
        assert!((n - 2000.0).abs() < 3.0 * se, "{n}");
    }

    #[test]
    fn phases_switch_at_boundary() {
        let s = spec(0.5);
        for x in s.generator().filter(|x| x.y_true == Label::Ood) {
            let v = x.x.values()[0];
            if x.t < 501 {
                assert!(v < -50.0);
            } else {
                assert!(v > 50.0);
            }
        }
        assert_eq!(s.phase_at(500), 0);
        assert_eq!(s.phase_at(501), 1);
        assert_eq!(s.shift_steps(), vec![501]);
    }

    #[test]
    fn seeded_determinism_and_oracle() {
        let s = spec(0.3);
        let a: Vec<_> = s.generator().collect();
        let b: Vec<_> = s.generator().collect();
        assert_eq!(a, b);
        let mut o = SimOracle::default();
        for x in &a[..20] {
            assert_eq!(o.label(x).unwrap(), x.y_true);
            assert_eq!(o.label(x).unwrap(), x.y_true);
        }
        assert_eq!(o.queries, 40);
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(0.2);
        s.ood_phases[1].start = 1;
        assert!(s.validate().is_err());
        let mut s = spec(0.2);
        s.ood_phases[0].start = 2;
        assert!(s.validate().is_err());
        let mut s = spec(0.2);
        s.gamma = 1.5;
        assert!(s.validate().is_err());
    }
}
