use std::sync::Arc;

use crate::numcore::{Scalar, Tensor};

/// Linear warmup to `max_lr`, then linear decay to zero at `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub max_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(max_lr: f64, warmup_frac: f64, total_steps: usize) -> Self {
        let warmup_steps = ((warmup_frac * total_steps as f64).ceil() as usize).clamp(1, total_steps.max(1));
        Self {
            max_lr,
            warmup_steps,
            total_steps,
        }
    }

    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.max_lr * step as f64 / self.warmup_steps as f64;
        }
        let remaining = self.total_steps.saturating_sub(self.warmup_steps);
        if remaining == 0 {
            return self.max_lr;
        }
        let left = self.total_steps.saturating_sub(step) as f64;
        self.max_lr * left / remaining as f64
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(shapes: &[Vec<usize>], beta1: f64, beta2: f64, weight_decay: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            weight_decay,
            step: 0,
            first: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
            second: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.first, &self.second)
    }

    /// Applies one update; `params` and `grads` line up with the shapes
    /// given at construction.
    pub fn update(&mut self, params: &mut [&mut Arc<Tensor<T>>], grads: &[&Tensor<T>], lr: f64) {
        assert_eq!(params.len(), self.first.len());
        assert_eq!(grads.len(), self.first.len());
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 / (1.0 - b1.powi(t));
        let c2 = 1.0 / (1.0 - b2.powi(t));
        let (b1, b2, c1, c2) = (T::of(b1), T::of(b2), T::of(c1), T::of(c2));
        let (lr_t, wd, eps) = (T::of(lr), T::of(lr * self.weight_decay), T::of(self.eps));
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            let p = Arc::make_mut(p);
            for (((w, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let update = (*m * c1) / ((*v * c2).sqrt() + eps);
                *w = *w - wd * *w - lr_t * update;
            }
        }
    }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::of(max_norm / norm);
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = *v * s);
        }
    }
    norm
}
