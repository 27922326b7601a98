use alloc::vec::Vec;

use num_traits::Float;

use crate::param::ParamSet;
use crate::tensor::Tensor;

/// Adam hyperparameters; the defaults are alpha 0.001, beta1 0.9,
/// beta2 0.999, epsilon 1e-8.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { alpha: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Per-parameter first/second moments plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    hyper: AdamHyper,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet, hyper: AdamHyper) -> Self {
        let m = params.iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();
        let v = params.iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();
        Self { hyper, t: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.hyper.alpha = alpha;
    }

    pub fn alpha(&self) -> f64 {
        self.hyper.alpha
    }

    /// One bias-corrected Adam update in place; gradients are zeroed after.
    pub fn step(&mut self, params: &mut ParamSet) {
        self.t += 1;
        let AdamHyper { alpha, beta1, beta2, epsilon } = self.hyper;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let val = p.value.data_mut();
            let grad = p.grad.data_mut();
            for j in 0..val.len() {
                let g = grad[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                val[j] -= alpha * m_hat / (v_hat.sqrt() + epsilon);
                grad[j] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::ParamSet;

    fn scalar_param() -> ParamSet {
        let mut ps = ParamSet::new();
        ps.zeros("p", 1);
        ps
    }

    #[test]
    fn first_step_with_unit_gradient() {
        let mut ps = scalar_param();
        let mut adam = AdamState::new(&ps, AdamHyper::default());
        ps.iter_mut().next().unwrap().grad.data_mut()[0] = 1.0;
        adam.step(&mut ps);
        let delta = ps.iter().next().unwrap().value.data()[0];
        // bias-corrected m_hat = v_hat = 1 on step one
        assert!((delta - (-0.001 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(ps.iter().next().unwrap().grad.data()[0], 0.0);
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut ps = scalar_param();
        ps.load_values("p", &[0.75]).unwrap();
        let mut adam = AdamState::new(&ps, AdamHyper::default());
        for _ in 0..50 {
            adam.step(&mut ps);
        }
        assert_eq!(ps.iter().next().unwrap().value.data()[0], 0.75);
        assert_eq!(adam.step_count(), 50);
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha12Rng;

        let run = || {
            let mut rng = ChaCha12Rng::seed_from_u64(42);
            let mut ps = ParamSet::new();
            ps.matrix_glorot("w", 3, 3, &mut rng);
            let mut adam = AdamState::new(&ps, AdamHyper::default());
            for _ in 0..100 {
                for p in ps.iter_mut() {
                    for g in p.grad.data_mut() {
                        *g = rng.random_range(-1.0..1.0);
                    }
                }
                adam.step(&mut ps);
            }
            let values = ps.iter().next().unwrap().value.data().to_vec();
            values
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
