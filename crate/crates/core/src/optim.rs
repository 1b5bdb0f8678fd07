//! Adam and a cosine-annealing learning-rate schedule.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Gradients, ParamStore};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    /// Fresh state with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(store: &ParamStore) -> Self {
        Self::with_hyper(store, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(store: &ParamStore, beta1: f32, beta2: f32, eps: f32) -> Self {
        let zeros: Vec<Tensor> = store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { beta1, beta2, eps, step: 0, m: zeros.clone(), v: zeros }
    }

    /// One bias-corrected Adam update of every parameter.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f32) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return shape_err(
                "adam_step",
                format!("{} params, {} grads, {} moments", params.len(), grads.len(), self.m.len()),
            );
        }
        for ((p, g), m) in params.tensors().iter().zip(grads.tensors()).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return shape_err("adam_step", format!("param {:?} grad {:?}", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = (1.0 - libm::pow(f64::from(self.beta1), t)) as f32;
        let bc2 = (1.0 - libm::pow(f64::from(self.beta2), t)) as f32;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in params.tensors_mut().iter_mut().zip(grads.tensors()).zip(&mut self.m).zip(&mut self.v) {
            let p = p.data_mut();
            let (m, v) = (m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (libm::sqrtf(vh) + eps);
            }
        }
        Ok(())
    }
}

/// Cosine annealing from `lr0` down to `floor` over `total_steps` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSchedule {
    pub lr0: f32,
    pub floor: f32,
    pub total_steps: u64,
}

impl CosineSchedule {
    pub fn lr(&self, step: u64) -> f32 {
        if self.total_steps == 0 {
            return self.floor;
        }
        let frac = (step.min(self.total_steps) as f64) / self.total_steps as f64;
        let cos = 0.5 * (1.0 + libm::cos(core::f64::consts::PI * frac));
        (f64::from(self.floor) + f64::from(self.lr0 - self.floor) * cos) as f32
    }
}

/// Optional schedule: constant learning rate, or cosine annealing to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant(f32),
    Cosine(CosineSchedule),
}

impl LrSchedule {
    pub fn new(lr: f32, cosine: bool, total_steps: u64) -> Self {
        if cosine {
            LrSchedule::Cosine(CosineSchedule { lr0: lr, floor: 0.0, total_steps })
        } else {
            LrSchedule::Constant(lr)
        }
    }

    pub fn lr(&self, step: u64) -> f32 {
        match self {
            LrSchedule::Constant(lr) => *lr,
            LrSchedule::Cosine(c) => c.lr(step),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Graph, ParamId};

    fn quadratic_grads(store: &ParamStore, id: ParamId) -> Gradients {
        let mut g = Graph::new(store);
        let x = g.param(id);
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        g.backward(s).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::from_fn(&[3, 2], |i| i as f32 - 2.0));
        let before = store.clone();
        let mut adam = AdamState::new(&store);
        let zeros = Gradients::zeros_like(&store);
        adam.step(&mut store, &zeros, 0.1).unwrap();
        assert_eq!(store, before);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![2.0, -3.0, 0.5]).unwrap());
        let grads = quadratic_grads(&store, id);
        let mut adam = AdamState::new(&store);
        adam.step(&mut store, &grads, 0.01).unwrap();
        // m̂ = g, v̂ = g², so Δ = -lr · g / (|g| + ε).
        let got = store.get(id).data();
        let want = [2.0 - 0.01, -3.0 + 0.01, 0.5 - 0.01];
        for (a, b) in got.iter().zip(want) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn identical_calls_are_deterministic() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![1.0, -1.5]).unwrap());
        let grads = quadratic_grads(&store, id);
        let (mut s1, mut s2) = (store.clone(), store.clone());
        let (mut a1, mut a2) = (AdamState::new(&store), AdamState::new(&store));
        a1.step(&mut s1, &grads, 0.05).unwrap();
        a2.step(&mut s2, &grads, 0.05).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(a1, a2);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![0.25, 4.0]).unwrap());
        let before = store.clone();
        let mut adam = AdamState::new(&store);
        for _ in 0..5 {
            let grads = quadratic_grads(&store, id);
            adam.step(&mut store, &grads, 0.0).unwrap();
        }
        assert_eq!(store, before);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut a = ParamStore::new();
        a.add("w", Tensor::zeros(&[2]));
        let mut b = ParamStore::new();
        b.add("w", Tensor::zeros(&[3]));
        let mut adam = AdamState::new(&a);
        assert!(adam.step(&mut a, &Gradients::zeros_like(&b), 0.1).is_err());
    }

    #[test]
    fn cosine_schedule_is_monotone_to_floor() {
        let s = CosineSchedule { lr0: 0.01, floor: 0.0, total_steps: 100 };
        assert_eq!(s.lr(0), 0.01);
        let mut prev = s.lr(0);
        for t in 1..=100 {
            let lr = s.lr(t);
            assert!(lr <= prev);
            prev = lr;
        }
        assert!(s.lr(100).abs() < 1e-12);
        assert_eq!(s.lr(500), s.lr(100));
    }
}
