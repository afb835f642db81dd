use serde::{Deserialize, Serialize};

use crate::config::OptimizerSettings;
use crate::domain::Label;
use crate::error::{Error, Result};
use crate::runio::rng::SimRng;
use crate::scorefn::optim::AdamW;

/// Two-layer ReLU classifier with two logits (OOD, ID) and bias terms.
/// Its score is `logit_id - logit_ood`, so "predict ID" is "score > 0".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryClassifier {
    dim: usize,
    hidden: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// Row 0 feeds the OOD logit, row 1 the ID logit.
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl BinaryClassifier {
    pub fn random(dim: usize, hidden: usize, rng: &mut SimRng) -> Self {
        let k1 = 1.0 / (dim as f64).sqrt();
        let k2 = 1.0 / (hidden as f64).sqrt();
        let mut draw = |n: usize, k: f64| (0..n).map(|_| rng.uniform_in(-k, k)).collect::<Vec<_>>();
        let w1 = draw(dim * hidden, k1);
        let b1 = draw(hidden, k1);
        let w2 = draw(2 * hidden, k2);
        let b2 = draw(2, k2);
        Self {
            dim,
            hidden,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn hidden_into(&self, x: &[f64], pre: &mut [f64]) {
        for ((row, b), a) in self.w1.chunks_exact(self.dim).zip(&self.b1).zip(pre.iter_mut()) {
            *a = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    fn logits(&self, pre: &[f64]) -> [f64; 2] {
        let mut z = [self.b2[0], self.b2[1]];
        for (c, zc) in z.iter_mut().enumerate() {
            let row = &self.w2[c * self.hidden..(c + 1) * self.hidden];
            *zc += row
                .iter()
                .zip(pre)
                .filter(|(_, a)| **a > 0.0)
                .map(|(w, a)| w * a)
                .sum::<f64>();
        }
        z
    }

    pub fn score_slice(&self, x: &[f64]) -> f64 {
        let mut pre = vec![0.0; self.hidden];
        self.hidden_into(x, &mut pre);
        let z = self.logits(&pre);
        z[1] - z[0]
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

    fn blocks_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn is_finite(&self) -> bool {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Mean cross-entropy over `(x, y)` pairs and its gradient, in the
    /// parameter order `w1, b1, w2, b2`.
    pub fn cross_entropy_grad(&self, xs: &[&[f64]], ys: &[Label]) -> (f64, [Vec<f64>; 4]) {
        let h = self.hidden;
        let mut g = [
            vec![0.0; self.w1.len()],
            vec![0.0; h],
            vec![0.0; 2 * h],
            vec![0.0; 2],
        ];
        let mut pre = vec![0.0; h];
        let mut loss = 0.0;
        let scale = 1.0 / xs.len().max(1) as f64;
        for (x, y) in xs.iter().zip(ys) {
            self.hidden_into(x, &mut pre);
            let z = self.logits(&pre);
            let m = z[0].max(z[1]);
            let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
            let yi = y.as_u8() as usize;
            loss += (lse - z[yi]) * scale;
            let mut dz = [(z[0] - lse).exp(), (z[1] - lse).exp()];
            dz[yi] -= 1.0;
            dz.iter_mut().for_each(|d| *d *= scale);
            g[3][0] += dz[0];
            g[3][1] += dz[1];
            for j in 0..h {
                let a = pre[j];
                if a <= 0.0 {
                    continue;
                }
                g[2][j] += dz[0] * a;
                g[2][h + j] += dz[1] * a;
                let da = dz[0] * self.w2[j] + dz[1] * self.w2[h + j];
                g[1][j] += da;
                let row = &mut g[0][j * self.dim..(j + 1) * self.dim];
                for (gk, xk) in row.iter_mut().zip(x.iter()) {
                    *gk += da * xk;
                }
            }
        }
        (loss, g)
    }
}

/// Cross-entropy training on a labeled pool. Each epoch draws
/// `ceil(n / batch)` minibatches uniformly with replacement.
/// Returns the model and the mean batch loss per epoch.
pub fn train_classifier(
    mut model: BinaryClassifier,
    xs: &[&[f64]],
    ys: &[Label],
    opt: &OptimizerSettings,
    rng: &mut SimRng,
) -> Result<(BinaryClassifier, Vec<f64>)> {
    let n = xs.len();
    if n == 0 || opt.epochs == 0 {
        return Ok((model, Vec::new()));
    }
    let n_params = model.w1.len() + model.b1.len() + model.w2.len() + model.b2.len();
    let mut adam = AdamW::from_settings(n_params, opt.lr_g, opt);
    let batches = n.div_ceil(opt.batch_size);
    let mut trace = Vec::with_capacity(opt.epochs);
    let mut bx: Vec<&[f64]> = Vec::with_capacity(opt.batch_size);
    let mut by: Vec<Label> = Vec::with_capacity(opt.batch_size);
    for _ in 0..opt.epochs {
        let mut total = 0.0;
        for _ in 0..batches {
            bx.clear();
            by.clear();
            for _ in 0..opt.batch_size {
                let i = rng.below(n);
                bx.push(xs[i]);
                by.push(ys[i]);
            }
            let (loss, g) = model.cross_entropy_grad(&bx, &by);
            total += loss;
            let [w1, b1, w2, b2] = model.blocks_mut();
            adam.step(&mut [&mut w1[..], &mut b1[..], &mut w2[..], &mut b2[..]], &[&g[0], &g[1], &g[2], &g[3]]);
        }
        if !model.is_finite() {
            return Err(Error::NumericOverflow("classifier parameters".into()));
        }
        trace.push(total / batches as f64);
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = SimRng::new(11);
        let model = BinaryClassifier::random(3, 5, &mut rng);
        let pts: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.normal()).collect()).collect();
        let xs: Vec<&[f64]> = pts.iter().map(|v| v.as_slice()).collect();
        let ys: Vec<Label> = (0..6).map(|i| if i % 2 == 0 { Label::Id } else { Label::Ood }).collect();
        let (_, g) = model.cross_entropy_grad(&xs, &ys);
        let h = 1e-6;
        for (block, grad) in g.iter().enumerate() {
            for k in 0..grad.len() {
                let mut plus = model.clone();
                let mut minus = model.clone();
                plus.blocks_mut()[block][k] += h;
                minus.blocks_mut()[block][k] -= h;
                let fd = (plus.cross_entropy_grad(&xs, &ys).0 - minus.cross_entropy_grad(&xs, &ys).0) / (2.0 * h);
                assert!((fd - grad[k]).abs() < 1e-6, "block {block} index {k}: {fd} vs {}", grad[k]);
            }
        }
    }

    #[test]
    fn learns_separable_pools() {
        let mut rng = SimRng::new(5);
        let mut pts = Vec::new();
        let mut ys = Vec::new();
        for i in 0..400 {
            let id = i % 2 == 0;
            let shift = if id { 3.0 } else { -3.0 };
            pts.push(vec![shift + rng.normal() * 0.5, rng.normal()]);
            ys.push(if id { Label::Id } else { Label::Ood });
        }
        let xs: Vec<&[f64]> = pts.iter().map(|v| v.as_slice()).collect();
        let opt = OptimizerSettings {
            lr_g: 0.01,
            epochs: 30,
            batch_size: 32,
            ..Default::default()
        };
        let init = BinaryClassifier::random(2, 16, &mut rng);
        let (model, trace) = train_classifier(init, &xs, &ys, &opt, &mut rng).unwrap();
        assert!(trace.last().unwrap() < &trace[0]);
        let mut correct = 0;
        for _ in 0..1000 {
            let id = rng.bernoulli(0.5);
            let shift = if id { 3.0 } else { -3.0 };
            let x = [shift + rng.normal() * 0.5, rng.normal()];
            if (model.score_slice(&x) > 0.0) == id {
                correct += 1;
            }
        }
        assert!(correct > 980, "{correct}");
    }
}
