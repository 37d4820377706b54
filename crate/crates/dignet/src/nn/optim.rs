//! Optimizers: sign-momentum (Lion-style) default and AdamW fallback, both
//! with decoupled weight decay, plus the cosine learning-rate schedule.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::nn::params::ParamStore;

pub type Arr = ArrayD<f64>;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Lion,
    AdamW,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    /// AdamW only.
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn lion(lr: f64, weight_decay: f64) -> OptimizerConfig {
        OptimizerConfig { kind: OptimizerKind::Lion, lr, beta1: 0.9, beta2: 0.99, weight_decay, eps: 1e-8 }
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> OptimizerConfig {
        OptimizerConfig { kind: OptimizerKind::AdamW, lr, beta1: 0.9, beta2: 0.999, weight_decay, eps: 1e-8 }
    }
}

pub struct Optimizer {
    pub config: OptimizerConfig,
    m: Vec<Arr>,
    v: Vec<Arr>,
    step_count: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, store: &ParamStore) -> Optimizer {
        let m = (0..store.len()).map(|i| Arr::zeros(store.value_at(i).raw_dim())).collect();
        let v = match config.kind {
            OptimizerKind::AdamW => {
                (0..store.len()).map(|i| Arr::zeros(store.value_at(i).raw_dim())).collect()
            }
            OptimizerKind::Lion => Vec::new(),
        };
        Optimizer { config, m, v, step_count: 0 }
    }

    /// One update with the given learning rate. Weight decay is decoupled and
    /// skipped for parameters marked no-decay in the store.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Arr], lr: f64) {
        assert_eq!(grads.len(), store.len());
        self.step_count += 1;
        let c = self.config.clone();
        for i in 0..store.len() {
            let decay = if store.is_no_decay(i) { 0.0 } else { c.weight_decay };
            match c.kind {
                OptimizerKind::Lion => {
                    // Update direction is the sign of the interpolated
                    // momentum; momentum itself uses the slower beta2.
                    let update = self.m[i].mapv(|mv| mv * c.beta1) + grads[i].mapv(|g| g * (1.0 - c.beta1));
                    let p = store.value_at_mut(i);
                    ndarray::Zip::from(&mut *p).and(&update).for_each(|pv, &u| {
                        let s = if u > 0.0 { 1.0 } else if u < 0.0 { -1.0 } else { 0.0 };
                        *pv -= lr * (s + decay * *pv);
                    });
                    self.m[i].zip_mut_with(&grads[i], |mv, &g| *mv = c.beta2 * *mv + (1.0 - c.beta2) * g);
                }
                OptimizerKind::AdamW => {
                    self.m[i].zip_mut_with(&grads[i], |mv, &g| *mv = c.beta1 * *mv + (1.0 - c.beta1) * g);
                    self.v[i].zip_mut_with(&grads[i], |vv, &g| *vv = c.beta2 * *vv + (1.0 - c.beta2) * g * g);
                    let bc1 = 1.0 - c.beta1.powi(self.step_count as i32);
                    let bc2 = 1.0 - c.beta2.powi(self.step_count as i32);
                    let p = store.value_at_mut(i);
                    ndarray::Zip::from(&mut *p).and(&self.m[i]).and(&self.v[i]).for_each(|pv, &mv, &vv| {
                        let mhat = mv / bc1;
                        let vhat = vv / bc2;
                        *pv -= lr * (mhat / (vhat.sqrt() + c.eps) + decay * *pv);
                    });
                }
            }
        }
    }
}

/// Cosine annealing from `lr0` to zero over `total` epochs.
pub fn cosine_lr(lr0: f64, epoch: usize, total: usize) -> f64 {
    if total == 0 {
        return lr0;
    }
    let t = (epoch as f64 / total as f64).min(1.0);
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{Init, ParamStore};
    use ndarray::arr1;

    #[test]
    fn cosine_endpoints() {
        assert!((cosine_lr(0.1, 0, 100) - 0.1).abs() < 1e-12);
        assert!((cosine_lr(0.1, 50, 100) - 0.05).abs() < 1e-12);
        assert!(cosine_lr(0.1, 100, 100).abs() < 1e-12);
    }

    #[test]
    fn lion_steps_by_sign() {
        let mut store = ParamStore::new(0);
        store.register("p", &[2], Init::Zeros);
        let mut opt = Optimizer::new(OptimizerConfig::lion(0.1, 0.0), &store);
        let g = vec![arr1(&[3.0, -0.001]).into_dyn()];
        opt.step(&mut store, &g, 0.1);
        // First step momentum is zero, so direction is sign(g) scaled by lr.
        let p = store.value("p");
        assert!((p[[0]] + 0.1).abs() < 1e-12);
        assert!((p[[1]] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn decay_skips_marked_params() {
        let mut store = ParamStore::new(0);
        store.register("w", &[1], Init::Ones);
        store.register("proto", &[1], Init::Ones);
        store.mark_no_decay("proto");
        let mut opt = Optimizer::new(OptimizerConfig::lion(0.1, 0.5), &store);
        let g = vec![arr1(&[0.0]).into_dyn(), arr1(&[0.0]).into_dyn()];
        opt.step(&mut store, &g, 0.1);
        // sign(0) = 0, so only decay acts.
        assert!(store.value("w")[[0]] < 1.0);
        assert_eq!(store.value("proto")[[0]], 1.0);
    }

    #[test]
    fn adamw_converges_on_quadratic() {
        // minimize (p-3)^2
        let mut store = ParamStore::new(0);
        store.register("p", &[1], Init::Zeros);
        let mut opt = Optimizer::new(OptimizerConfig::adamw(0.1, 0.0), &store);
        for _ in 0..500 {
            let p = store.value("p")[[0]];
            let g = vec![arr1(&[2.0 * (p - 3.0)]).into_dyn()];
            opt.step(&mut store, &g, 0.1);
        }
        assert!((store.value("p")[[0]] - 3.0).abs() < 1e-3);
    }
}
