use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamStore) -> Self {
        let zeros = |p: &Tensor| vec![0.0; p.len()];
        Self {
            cfg,
            first: params.tensors().iter().map(zeros).collect(),
            second: params.tensors().iter().map(zeros).collect(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, i: usize) -> (&[f64], &[f64]) {
        (&self.first[i], &self.second[i])
    }

    /// Applies one update; `grads` is aligned with the store's parameter order.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", Tensor::new(vec![1], vec![p]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut store = single(-0.25);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.step(&mut store, &[Tensor::zeros(&[1])]);
        assert_eq!(store.tensors()[0].data()[0], -0.25);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut store = single(1.5);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.step(&mut store, &[Tensor::new(vec![1], vec![2.0]).unwrap()]);
        let (m1, v1) = (adam.moments(0).0[0], adam.moments(0).1[0]);
        adam.step(&mut store, &[Tensor::zeros(&[1])]);
        let (m2, v2) = (adam.moments(0).0[0], adam.moments(0).1[0]);
        assert!((m2 - 0.9 * m1).abs() < 1e-15);
        assert!((v2 - 0.999 * v1).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = single(0.0);
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &store);
        adam.step(&mut store, &[Tensor::new(vec![1], vec![3.7]).unwrap()]);
        let moved = store.tensors()[0].data()[0];
        assert!((moved + 0.01).abs() < 1e-8, "moved {moved}");
    }

    #[test]
    fn quadratic_decreases_over_three_steps() {
        let mut store = single(1.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &store);
        let mut f_prev = 1.0;
        for _ in 0..3 {
            let p = store.tensors()[0].data()[0];
            adam.step(&mut store, &[Tensor::new(vec![1], vec![2.0 * p]).unwrap()]);
            let p = store.tensors()[0].data()[0];
            let f = p * p;
            assert!(f < f_prev);
            f_prev = f;
        }
        // sign-like first steps: 1 → 0.9 → 0.8 → 0.7 (to within Adam's second-moment drift)
        assert!((store.tensors()[0].data()[0] - 0.7).abs() < 0.02);
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut g = vec![Tensor::new(vec![2], vec![3.0, 4.0]).unwrap()];
        let before = clip_grad_norm(&mut g, 1.0);
        assert_eq!(before, 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
    }
}
