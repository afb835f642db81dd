use crate::config::OptimizerSettings;

/// Adam with decoupled weight decay over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamW {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(n: usize, lr: f64, weight_decay: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn from_settings(n: usize, lr: f64, s: &OptimizerSettings) -> Self {
        Self::new(n, lr, s.weight_decay, s.adam_beta1, s.adam_beta2, s.adam_eps)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update. `params` and `grads` may be split across several
    /// slices as long as their concatenated order never changes.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut i = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            debug_assert_eq!(p.len(), g.len());
            for (pk, gk) in p.iter_mut().zip(g.iter()) {
                let m = &mut self.m[i];
                let v = &mut self.v[i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gk;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gk * gk;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *pk -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * *pk);
                i += 1;
            }
        }
        debug_assert_eq!(i, self.m.len());
    }
}
