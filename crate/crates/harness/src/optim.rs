//! Adam with bias correction, global-norm clipping and a cosine schedule.
//!
//! For step `t = 1, 2, …` with gradient `g` (already averaged over the batch
//! and clipped to global norm `clip` when `clip > 0`):
//!
//! ```text
//! m ← β1·m + (1 − β1)·g
//! v ← β2·v + (1 − β2)·g²
//! θ ← θ − lr_t · (m / (1 − β1^t)) / (√(v / (1 − β2^t)) + ε)
//! ```
//!
//! Moments are kept in `f64` whatever the parameter scalar.

use std::f64::consts::PI;

use aerialbev_core::{Param, Real};

/// Learning rate at step `t` of `total` (0-based), cosine from `peak` down
/// to `peak · min_factor`.
pub fn cosine_lr(peak: f64, min_factor: f64, t: usize, total: usize) -> f64 {
    let floor = peak * min_factor;
    if total <= 1 {
        return peak;
    }
    let frac = t.min(total - 1) as f64 / (total - 1) as f64;
    floor + 0.5 * (peak - floor) * (1.0 + (PI * frac).cos())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<T: Real>(params: &[&Param<T>], beta1: f64, beta2: f64, eps: f64, clip: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            clip,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    /// Global L2 norm of the scaled gradients.
    pub fn grad_norm<T: Real>(params: &[&mut Param<T>], scale: f64) -> f64 {
        params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| {
                let x = g.as_f64() * scale;
                x * x
            })
            .sum::<f64>()
            .sqrt()
    }

    /// One update using `grad · grad_scale`. Returns the pre-clip norm.
    pub fn update<T: Real>(&mut self, params: &mut [&mut Param<T>], lr: f64, grad_scale: f64) -> f64 {
        assert_eq!(params.len(), self.m.len(), "optimizer built for a different model");
        let norm = Self::grad_norm(params, grad_scale);
        let scale = if self.clip > 0.0 && norm > self.clip {
            grad_scale * self.clip / norm
        } else {
            grad_scale
        };
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i].as_f64() * scale;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let step = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                p.value[i] = T::of(p.value[i].as_f64() - step);
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(1e-3, 0.1, 0, 100), 1e-3);
        assert!((cosine_lr(1e-3, 0.1, 99, 100) - 1e-4).abs() < 1e-15);
        assert!((cosine_lr(1.0, 0.0, 50, 101) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction the first step is lr·sign(g).
        let mut p = Param::<f64>::filled("w", vec![2], 1.0);
        p.grad = vec![0.3, -5.0];
        let mut opt = Adam::new(&[&p], 0.9, 0.999, 1e-12, 0.0);
        opt.update(&mut [&mut p], 0.01, 1.0);
        assert!((p.value[0] - 0.99).abs() < 1e-9);
        assert!((p.value[1] - 1.01).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Param::<f64>::filled("w", vec![3], 0.0);
        let target = [1.0, -2.0, 0.5];
        let mut opt = Adam::new(&[&p], 0.9, 0.999, 1e-8, 0.0);
        for t in 0..2000 {
            for i in 0..3 {
                p.grad[i] = 2.0 * (p.value[i] - target[i]);
            }
            opt.update(&mut [&mut p], cosine_lr(0.05, 0.0, t, 2000), 1.0);
        }
        for i in 0..3 {
            assert!((p.value[i] - target[i]).abs() < 1e-3);
        }
    }

    #[test]
    fn clipping_bounds_the_effective_gradient() {
        let mut p = Param::<f64>::filled("w", vec![1], 0.0);
        p.grad = vec![100.0];
        let mut opt = Adam::new(&[&p], 0.0, 0.0, 0.0, 1.0);
        let n = opt.update(&mut [&mut p], 0.1, 1.0);
        assert_eq!(n, 100.0);
        assert!((opt.m[0][0] - 1.0).abs() < 1e-12);
    }
}
