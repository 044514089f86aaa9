use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// Adam hyperparameters. Defaults are the joint-training settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.8,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// First/second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let m: Vec<Tensor<T>> = shapes.into_iter().map(Tensor::zeros).collect();
        AdamState {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    /// One bias-corrected Adam update at learning rate `lr`.
    ///
    /// `params[i]` is skipped when `trainable[i]` is false; its moments stay
    /// at zero. The step counter advances once per call.
    pub fn step(
        &mut self,
        config: &AdamConfig,
        lr: f64,
        params: &mut [&mut Tensor<T>],
        grads: &[Tensor<T>],
        trainable: &[bool],
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() || trainable.len() != self.m.len() {
            return Err(Error::shape("adam_step", &[self.m.len()], &[params.len(), grads.len()]));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::shape("adam_step", p.shape(), g.shape()));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (T::lit(config.beta1), T::lit(config.beta2));
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let (lr, eps) = (T::lit(lr), T::lit(config.epsilon));
        for (i, p) in params.iter_mut().enumerate() {
            if !trainable[i] {
                continue;
            }
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + (T::one() - b1) * g[j];
                v[j] = b2 * v[j] + (T::one() - b2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn step_scalar(state: &mut AdamState<f64>, w: &mut Tensor<f64>, g: f64, lr: f64) {
        let grads = vec![Tensor::scalar(g)];
        state.step(&AdamConfig::default(), lr, &mut [w], &grads, &[true]).unwrap();
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut w = Tensor::<f64>::new(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = w.clone();
        let mut s = AdamState::new([w.shape()]);
        let g = vec![Tensor::zeros(&[3])];
        s.step(&AdamConfig::default(), 0.001, &mut [&mut w], &g, &[true]).unwrap();
        assert_eq!(w, before);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_is_lr_over_one_plus_eps() {
        let mut w = Tensor::scalar(0.0f64);
        let mut s = AdamState::new([w.shape()]);
        step_scalar(&mut s, &mut w, 1.0, 0.001);
        // m_hat = 1, v_hat = 1 after bias correction.
        let expected = -0.001 / (1.0 + 1e-7);
        assert!((w.data()[0] - expected).abs() < 1e-15, "{}", w.data()[0]);
    }

    #[test]
    fn quadratic_descends_monotonically() {
        // f(w) = (w - 3)^2, gradient 2(w - 3).
        let mut w = Tensor::scalar(0.0f64);
        let mut s = AdamState::new([w.shape()]);
        let mut prev = 9.0;
        for _ in 0..2 {
            let g = 2.0 * (w.data()[0] - 3.0);
            step_scalar(&mut s, &mut w, g, 0.1);
            let f = (w.data()[0] - 3.0).powi(2);
            assert!(f < prev);
            prev = f;
        }
    }

    #[test]
    fn frozen_entries_are_skipped_and_deterministic() {
        let mk = || {
            let a = Tensor::<f32>::new(&[2], vec![1.0, 2.0]).unwrap();
            let b = Tensor::<f32>::new(&[1], vec![5.0]).unwrap();
            (a, b)
        };
        let grads = vec![
            Tensor::new(&[2], vec![0.3f32, -0.7]).unwrap(),
            Tensor::new(&[1], vec![1.0f32]).unwrap(),
        ];
        let run = || {
            let (mut a, mut b) = mk();
            let mut s = AdamState::new([a.shape(), b.shape()]);
            for _ in 0..3 {
                s.step(&AdamConfig::default(), 0.01, &mut [&mut a, &mut b], &grads, &[true, false]).unwrap();
            }
            (a, b)
        };
        let (a1, b1) = run();
        let (a2, b2) = run();
        assert_eq!(a1, a2);
        assert_eq!(b1.data(), &[5.0]);
        assert_eq!(b2.data(), &[5.0]);
    }
}
