use alloc::vec;
use alloc::vec::Vec;

use super::Param;
use crate::math::{powi, sqrt};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam. Moment buffers are created on the first step and
/// matched to parameters by position thereafter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::shape("Adam parameter count", &[self.m.len()], &[params.len()]));
        }
        for (i, p) in params.iter().enumerate() {
            if p.value.len() != self.m[i].len() || p.grad.len() != p.value.len() {
                return Err(Error::shape(
                    alloc::format!("Adam parameter {i}"),
                    &[self.m[i].len()],
                    &[p.value.len()],
                ));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step.min(i32::MAX as u64) as i32;
        let c1 = 1.0 - powi(beta1, t);
        let c2 = 1.0 - powi(beta2, t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Param { value, grad } = &mut **p;
            for (((w, &g), mi), vi) in value.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= lr * mhat / (sqrt(vhat) + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn scalar(v: f32, g: f32) -> Param {
        let mut p = Param::new(Tensor::new(&[1], alloc::vec![v]).unwrap());
        p.grad.data_mut()[0] = g;
        p
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        for g in [3.0f32, -0.02] {
            let mut p = scalar(0.0, g);
            let mut adam = Adam::new(AdamConfig::default());
            adam.step(&mut [&mut p]).unwrap();
            let delta = p.value.data()[0];
            assert!((delta + 1e-4 * g.signum()).abs() < 1e-8, "delta {delta}");
            assert_eq!(adam.steps(), 1);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar(0.7, 0.0);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..100 {
            adam.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value.data()[0], 0.7);
    }

    #[test]
    fn shape_change_rejected() {
        let mut p = scalar(0.7, 1.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p]).unwrap();
        let mut q = Param::new(Tensor::zeros(&[2]));
        assert!(adam.step(&mut [&mut q]).is_err());
    }
}
