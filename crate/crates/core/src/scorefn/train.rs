//! Minibatch optimization of the relaxed objective, the offline reference
//! fit and the DKW model-selection test.

use crate::config::OptimizerSettings;
use crate::confidence::dkw_interval;
use crate::error::{Error, Result};
use crate::estimators::{tpr_hat_scores, IdScoreSet};
use crate::runio::rng::SimRng;
use crate::scorefn::objective::{surrogate_grad_into, SurrogateGrad};
use crate::scorefn::optim::AdamW;
use crate::scorefn::{ScoringFunction, TwoLayerScorer};

/// Inputs to one optimization run, as borrowed feature slices.
#[derive(Debug, Clone, Copy)]
pub struct P2Data<'a> {
    pub ood: &'a [&'a [f64]],
    pub ood_weights: &'a [f64],
    pub ids: &'a [&'a [f64]],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P2Settings {
    pub beta: f64,
    pub kappa: f64,
    pub optimizer: OptimizerSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct P2Outcome {
    pub g: TwoLayerScorer,
    pub lambda: f64,
    /// Mean minibatch loss per epoch.
    pub trace: Vec<f64>,
}

/// OOD share of a minibatch: `round(B * beta / (1 + beta))`, at least one.
pub fn ood_batch_share(batch: usize, beta: f64) -> usize {
    let share = (batch as f64 * beta / (1.0 + beta)).round() as usize;
    share.clamp(1, batch.saturating_sub(1).max(1))
}

struct WeightedSampler {
    cumulative: Vec<f64>,
}

impl WeightedSampler {
    fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn draw(&self, rng: &mut SimRng) -> usize {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let u = rng.uniform() * total;
        self.cumulative
            .partition_point(|c| *c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Runs `epochs` passes of minibatch AdamW on `-TPR~ + beta FPR~`.
///
/// Each minibatch holds `ood_batch_share` OOD records drawn with
/// replacement in proportion to their weights and the rest ID points drawn
/// uniformly with replacement; an epoch is `ceil((n_ood + n_id) / B)`
/// minibatches.
pub fn optimize_p2(
    init: TwoLayerScorer,
    init_lambda: f64,
    data: P2Data<'_>,
    settings: &P2Settings,
    rng: &mut SimRng,
) -> Result<P2Outcome> {
    let opt = &settings.optimizer;
    if opt.epochs == 0 {
        return Ok(P2Outcome {
            g: init,
            lambda: init_lambda,
            trace: Vec::new(),
        });
    }
    if data.ids.is_empty() {
        return Err(Error::EmptyIdSet);
    }
    if data.ood.is_empty() || data.ood_weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::EmptyBuffer);
    }
    if !init_lambda.is_finite() {
        return Err(Error::NonFinite("initial threshold"));
    }
    let mut g = init;
    let mut lambda = init_lambda;
    let m_ood = ood_batch_share(opt.batch_size, settings.beta);
    let m_id = opt.batch_size.saturating_sub(m_ood).max(1);
    let unit = vec![1.0; m_ood];
    let sampler = WeightedSampler::new(data.ood_weights);
    let batches = (data.ood.len() + data.ids.len()).div_ceil(opt.batch_size);

    let mut adam_g = AdamW::from_settings(g.n_params(), opt.lr_g, opt);
    let mut adam_l = AdamW::from_settings(1, opt.lr_lambda, opt);
    let mut grad = SurrogateGrad::zeros(&g);
    let mut pre = vec![0.0; g.hidden()];
    let mut bo: Vec<&[f64]> = Vec::with_capacity(m_ood);
    let mut bi: Vec<&[f64]> = Vec::with_capacity(m_id);
    let mut trace = Vec::with_capacity(opt.epochs);

    for _ in 0..opt.epochs {
        let mut total = 0.0;
        for _ in 0..batches {
            bo.clear();
            bi.clear();
            for _ in 0..m_ood {
                bo.push(data.ood[sampler.draw(rng)]);
            }
            for _ in 0..m_id {
                bi.push(data.ids[rng.below(data.ids.len())]);
            }
            total += surrogate_grad_into(
                &g,
                lambda,
                &bo,
                &unit,
                &bi,
                settings.beta,
                settings.kappa,
                &mut pre,
                &mut grad,
            )?;
            {
                let (w1, w2) = g.params_mut();
                adam_g.step(&mut [w1, w2], &[&grad.w1, &grad.w2]);
            }
            let mut l = [lambda];
            adam_l.step(&mut [&mut l], &[&[grad.lambda]]);
            lambda = l[0];
        }
        if !g.is_finite() || !lambda.is_finite() {
            return Err(Error::NumericOverflow("scoring network parameters".into()));
        }
        trace.push(total / batches as f64);
    }
    Ok(P2Outcome { g, lambda, trace })
}

/// Weighted lower `q`-quantile of `scores`.
pub fn weighted_quantile(scores: &[f64], weights: &[f64], q: f64) -> Option<f64> {
    let total: f64 = weights.iter().sum();
    if scores.is_empty() || total <= 0.0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    let target = q.clamp(0.0, 1.0) * total;
    let mut acc = 0.0;
    for i in &idx {
        acc += weights[*i];
        if acc >= target {
            return Some(scores[*i]);
        }
    }
    idx.last().map(|i| scores[*i])
}

/// Threshold whose empirical exceedance over `ood_scores` lies in
/// `[alpha - 1/n, alpha]`.
pub fn alpha_threshold(ood_scores: &[f64], alpha: f64) -> Option<f64> {
    if ood_scores.is_empty() {
        return None;
    }
    let mut sorted = ood_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let m = ((1.0 - alpha) * n as f64).ceil() as usize;
    Some(sorted[m.clamp(1, n) - 1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineReference {
    pub g_star: TwoLayerScorer,
    pub lambda: f64,
    pub tpr_star: f64,
    pub trace: Vec<f64>,
}

/// Fits a fresh network on i.i.d. pools with unit OOD weights, then sets
/// the threshold at empirical FPR `alpha` on the OOD pool.
pub fn fit_offline_reference(
    id_pool: &[&[f64]],
    ood_pool: &[&[f64]],
    settings: &P2Settings,
    alpha: f64,
    rng: &mut SimRng,
) -> Result<OfflineReference> {
    let dim = id_pool.first().ok_or(Error::EmptyIdSet)?.len();
    if ood_pool.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let init = TwoLayerScorer::random(dim, settings.optimizer.hidden, rng);
    let init_scores: Vec<f64> = ood_pool.iter().map(|x| init.score_slice(x)).collect();
    let lambda0 = alpha_threshold(&init_scores, alpha).unwrap_or(0.0);
    let weights = vec![1.0; ood_pool.len()];
    let mut s = *settings;
    s.optimizer.epochs = settings.optimizer.reference_epochs;
    let out = optimize_p2(
        init,
        lambda0,
        P2Data {
            ood: ood_pool,
            ood_weights: &weights,
            ids: id_pool,
        },
        &s,
        rng,
    )?;
    let ood_scores: Vec<f64> = ood_pool.iter().map(|x| out.g.score_slice(x)).collect();
    let lambda = alpha_threshold(&ood_scores, alpha).ok_or(Error::EmptyBuffer)?;
    let id_scores: Vec<f64> = id_pool.iter().map(|x| out.g.score_slice(x)).collect();
    let tpr_star = tpr_hat_scores(&id_scores, lambda)?;
    Ok(OfflineReference {
        g_star: out.g,
        lambda,
        tpr_star,
        trace: out.trace,
    })
}

/// Accept iff `tpr_new + 2 zeta > tpr_old`.
pub fn accepts(tpr_new: f64, tpr_old: f64, zeta: f64) -> bool {
    tpr_new + 2.0 * zeta > tpr_old
}

pub fn model_selection(
    g_new: &ScoringFunction,
    lambda_new: f64,
    g_old: &ScoringFunction,
    lambda_old: f64,
    ids: &IdScoreSet,
    delta: f64,
) -> Result<bool> {
    let new = tpr_hat_scores(&ids.scores(g_new)?, lambda_new)?;
    let old = tpr_hat_scores(&ids.scores(g_old)?, lambda_old)?;
    Ok(accepts(new, old, dkw_interval(delta, ids.len())))
}
