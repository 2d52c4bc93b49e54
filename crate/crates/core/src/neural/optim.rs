use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use super::tensor::Tensor;

/// Adam with optional global-norm gradient clipping.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = store.ids().map(|id| {
            let (r, c) = store.get(id).shape();
            Tensor::zeros(r, c)
        }).collect();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: Some(5.0), step: 0, first: zeros.clone(), second: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let clip = match self.clip_norm {
            Some(max) => {
                let norm = grads.global_norm();
                if norm > max { max / norm } else { 1.0 }
            }
            None => 1.0,
        };
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (id, g) in grads.iter() {
            let m = self.first[id.index()].data_mut();
            let v = self.second[id.index()].data_mut();
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = g.data()[i] * clip;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Halves (by `factor`) the learning rate when the monitored loss fails to improve by
/// `threshold` for more than `patience` consecutive epochs; never goes below `floor`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    pub floor: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauSchedule {
    pub fn new(factor: f64, patience: usize, threshold: f64, floor: f64) -> Self {
        PlateauSchedule { factor, patience, threshold, floor, best: f64::INFINITY, bad_epochs: 0 }
    }

    /// Record an epoch's loss; returns the (possibly decayed) learning rate.
    pub fn observe(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best - self.threshold {
            self.best = loss;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            return (lr * self.factor).max(self.floor);
        }
        lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::graph::Graph;

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::row(vec![3.0, -2.0])).unwrap();
        let mut adam = Adam::new(&store, 0.1);
        for _ in 0..500 {
            let grads = {
                let mut g = Graph::new(&store);
                let v = g.param(x);
                let sq = g.mul(v, v);
                let loss = g.sum(sq);
                g.backward(loss)
            };
            adam.update(&mut store, &grads);
        }
        assert!(store.get(x).data().iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn plateau_decays_after_patience_and_respects_floor() {
        let mut s = PlateauSchedule::new(0.5, 1, 1e-3, 1e-5);
        let lr = s.observe(1.0, 1e-3);
        assert_eq!(lr, 1e-3);
        let lr = s.observe(0.9995, lr);
        assert_eq!(lr, 5e-4);
        let mut lr = lr;
        for _ in 0..20 {
            lr = s.observe(2.0, lr);
        }
        assert_eq!(lr, 1e-5);
    }
}
