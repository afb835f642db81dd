//! The relaxed objective `-TPR~ + beta * FPR~` and its analytic gradient.

use crate::error::{Error, Result};
use crate::estimators::{sigmoid, IdScoreSet, OodBuffer};
use crate::scorefn::TwoLayerScorer;

/// Gradient of the relaxed objective with respect to `W1`, `w2` and `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateGrad {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub lambda: f64,
}

impl SurrogateGrad {
    pub fn zeros(g: &TwoLayerScorer) -> Self {
        Self {
            w1: vec![0.0; g.w1().len()],
            w2: vec![0.0; g.w2().len()],
            lambda: 0.0,
        }
    }

    fn clear(&mut self) {
        self.w1.iter_mut().for_each(|v| *v = 0.0);
        self.w2.iter_mut().for_each(|v| *v = 0.0);
        self.lambda = 0.0;
    }
}

fn check_inputs(ood: &[&[f64]], ood_w: &[f64], ids: &[&[f64]]) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::EmptyIdSet);
    }
    if ood.len() != ood_w.len() {
        return Err(Error::DimensionMismatch {
            expected: ood.len(),
            got: ood_w.len(),
        });
    }
    let total: f64 = ood_w.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyBuffer);
    }
    Ok(total)
}

/// Loss over raw feature slices with importance weights on the OOD side.
pub fn surrogate_loss_slices(
    g: &TwoLayerScorer,
    lambda: f64,
    ood: &[&[f64]],
    ood_w: &[f64],
    ids: &[&[f64]],
    beta: f64,
    kappa: f64,
) -> Result<f64> {
    let total = check_inputs(ood, ood_w, ids)?;
    let tpr: f64 = ids
        .iter()
        .map(|x| sigmoid(kappa, g.score_slice(x) - lambda))
        .sum::<f64>()
        / ids.len() as f64;
    let fpr: f64 = ood
        .iter()
        .zip(ood_w)
        .map(|(x, w)| w * sigmoid(kappa, g.score_slice(x) - lambda))
        .sum::<f64>()
        / total;
    Ok(-tpr + beta * fpr)
}

/// Adds `coef * d g(x) / d params` into `grad`; `pre` holds `W1 x`.
#[inline]
fn backprop(g: &TwoLayerScorer, x: &[f64], pre: &[f64], coef: f64, grad: &mut SurrogateGrad) {
    let d = g.dim();
    for (j, a) in pre.iter().enumerate() {
        if *a <= 0.0 {
            continue;
        }
        grad.w2[j] += coef * a;
        let c = coef * g.w2()[j];
        for (gk, xk) in grad.w1[j * d..(j + 1) * d].iter_mut().zip(x) {
            *gk += c * xk;
        }
    }
}

/// Loss and gradient written into `grad`, reusing `pre` as scratch.
pub(crate) fn surrogate_grad_into(
    g: &TwoLayerScorer,
    lambda: f64,
    ood: &[&[f64]],
    ood_w: &[f64],
    ids: &[&[f64]],
    beta: f64,
    kappa: f64,
    pre: &mut [f64],
    grad: &mut SurrogateGrad,
) -> Result<f64> {
    let total = check_inputs(ood, ood_w, ids)?;
    grad.clear();
    let inv_n = 1.0 / ids.len() as f64;
    let mut loss = 0.0;
    for x in ids {
        let s = sigmoid(kappa, g.forward_into(x, pre) - lambda);
        let ds = kappa * s * (1.0 - s);
        loss -= s * inv_n;
        grad.lambda += ds * inv_n;
        backprop(g, x, pre, -ds * inv_n, grad);
    }
    for (x, w) in ood.iter().zip(ood_w) {
        let s = sigmoid(kappa, g.forward_into(x, pre) - lambda);
        let ds = kappa * s * (1.0 - s);
        let c = beta * w / total;
        loss += c * s;
        grad.lambda -= c * ds;
        backprop(g, x, pre, c * ds, grad);
    }
    Ok(loss)
}

pub fn surrogate_grad_slices(
    g: &TwoLayerScorer,
    lambda: f64,
    ood: &[&[f64]],
    ood_w: &[f64],
    ids: &[&[f64]],
    beta: f64,
    kappa: f64,
) -> Result<(f64, SurrogateGrad)> {
    let mut grad = SurrogateGrad::zeros(g);
    let mut pre = vec![0.0; g.hidden()];
    let loss = surrogate_grad_into(g, lambda, ood, ood_w, ids, beta, kappa, &mut pre, &mut grad)?;
    Ok((loss, grad))
}

fn buffer_slices(buffer: &OodBuffer) -> (Vec<&[f64]>, Vec<f64>) {
    buffer.records().map(|r| (r.x.values(), r.z_weight)).unzip()
}

fn id_slices(ids: &IdScoreSet) -> Vec<&[f64]> {
    ids.features().iter().map(|x| x.values()).collect()
}

fn check_dims(g: &TwoLayerScorer, buffer: &OodBuffer, ids: &IdScoreSet) -> Result<()> {
    for x in buffer.records().map(|r| &r.x).chain(ids.features()) {
        g.check_dim(x.values())?;
    }
    Ok(())
}

pub fn surrogate_loss(
    g: &TwoLayerScorer,
    lambda: f64,
    buffer: &OodBuffer,
    ids: &IdScoreSet,
    beta: f64,
    kappa: f64,
) -> Result<f64> {
    check_dims(g, buffer, ids)?;
    let (ood, w) = buffer_slices(buffer);
    surrogate_loss_slices(g, lambda, &ood, &w, &id_slices(ids), beta, kappa)
}

pub fn surrogate_grad(
    g: &TwoLayerScorer,
    lambda: f64,
    buffer: &OodBuffer,
    ids: &IdScoreSet,
    beta: f64,
    kappa: f64,
) -> Result<SurrogateGrad> {
    check_dims(g, buffer, ids)?;
    let (ood, w) = buffer_slices(buffer);
    surrogate_grad_slices(g, lambda, &ood, &w, &id_slices(ids), beta, kappa).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FeatureVector, LabeledOodRecord};
    use crate::runio::rng::SimRng;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    fn as_slices(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|x| x.as_slice()).collect()
    }

    fn scalar_net() -> TwoLayerScorer {
        // g(x) = relu(x) - relu(-x) = x.
        TwoLayerScorer::new(1, 2, vec![1.0, -1.0], vec![1.0, -1.0]).unwrap()
    }

    #[test]
    fn small_instance_matches_hand_arithmetic() {
        let g = scalar_net();
        let ood = pts(&[-0.1, 0.05, 0.2]);
        let w = [1.0, 5.0, 1.0];
        let ids = pts(&[0.3, 0.0, -0.02]);
        let (beta, kappa, lambda) = (1.5, 10.0, 0.01);
        let sig = |z: f64| 1.0 / (1.0 + (-kappa * z).exp());
        let tpr = (sig(0.29) + sig(-0.01) + sig(-0.03)) / 3.0;
        let fpr = (sig(-0.11) + 5.0 * sig(0.04) + sig(0.19)) / 7.0;
        let got = surrogate_loss_slices(&g, lambda, &as_slices(&ood), &w, &as_slices(&ids), beta, kappa).unwrap();
        assert!((got - (-tpr + beta * fpr)).abs() < 1e-14);
    }

    #[test]
    fn ties_give_half() {
        let g = scalar_net();
        let ood = pts(&[0.4, 0.4]);
        let ids = pts(&[0.4]);
        let got = surrogate_loss_slices(&g, 0.4, &as_slices(&ood), &[1.0, 5.0], &as_slices(&ids), 1.5, 50.0).unwrap();
        assert!((got - (-0.5 + 0.75)).abs() < 1e-15);
    }

    #[test]
    fn beta_zero_pushes_lambda_down() {
        let g = scalar_net();
        let ood = pts(&[0.0]);
        let ids = pts(&[0.1, -0.1]);
        let (_, grad) = surrogate_grad_slices(&g, 0.0, &as_slices(&ood), &[1.0], &as_slices(&ids), 0.0, 5.0).unwrap();
        // dL/dlambda > 0: descent lowers lambda.
        assert!(grad.lambda > 0.0);
    }

    #[test]
    fn symmetric_instance_has_zero_lambda_gradient() {
        let g = scalar_net();
        let ood = pts(&[0.2, -0.2]);
        let ids = pts(&[0.2, -0.2]);
        let (_, grad) = surrogate_grad_slices(&g, 0.0, &as_slices(&ood), &[1.0, 1.0], &as_slices(&ids), 1.0, 10.0).unwrap();
        assert!(grad.lambda.abs() < 1e-15);
    }

    #[test]
    fn dead_units_have_zero_first_layer_gradient() {
        let g = TwoLayerScorer::new(2, 2, vec![1.0, 1.0, 2.0, 0.5], vec![0.3, -0.7]).unwrap();
        // Every input has negative coordinates, so W1 x < 0 componentwise.
        let ood = vec![vec![-1.0, -2.0], vec![-0.5, -0.1]];
        let ids = vec![vec![-3.0, -0.2]];
        let (_, grad) = surrogate_grad_slices(&g, 0.1, &as_slices(&ood), &[1.0, 5.0], &as_slices(&ids), 1.5, 50.0).unwrap();
        assert!(grad.w1.iter().all(|v| *v == 0.0));
        assert!(grad.w2.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn buffer_wrapper_agrees_with_slices() {
        let mut rng = SimRng::new(2);
        let g = TwoLayerScorer::random(3, 4, &mut rng);
        let mut buffer = OodBuffer::new(None);
        let mut raw = Vec::new();
        for t in 0..5 {
            let v: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            raw.push(v.clone());
            buffer.push(LabeledOodRecord::new(t, FeatureVector::new(v).unwrap(), t % 2 == 0, 0.2));
        }
        let id_raw: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.normal()).collect()).collect();
        let ids = IdScoreSet::new(id_raw.iter().map(|v| FeatureVector::new(v.clone()).unwrap()).collect()).unwrap();
        let w: Vec<f64> = (0..5).map(|t| if t % 2 == 0 { 5.0 } else { 1.0 }).collect();
        let a = surrogate_loss(&g, 0.05, &buffer, &ids, 1.5, 50.0).unwrap();
        let b = surrogate_loss_slices(&g, 0.05, &as_slices(&raw), &w, &as_slices(&id_raw), 1.5, 50.0).unwrap();
        assert_eq!(a, b);
        let bad = IdScoreSet::new(vec![FeatureVector::new(vec![1.0]).unwrap()]).unwrap();
        assert!(surrogate_grad(&g, 0.0, &buffer, &bad, 1.5, 50.0).is_err());
    }
}
