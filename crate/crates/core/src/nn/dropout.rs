use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mode, Tensor};
use crate::{Error, Result};

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` during
/// training so that Eval mode is the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f32,
    rng: ChaCha8Rng,
    mask: Option<Vec<f32>>,
}

impl Dropout {
    pub fn new(rate: f32, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(alloc::format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mask: Vec<f32> = match mode {
            Mode::Eval => alloc::vec![1.0; x.len()],
            Mode::Train => {
                let keep = 1.0 / (1.0 - self.rate);
                (0..x.len())
                    .map(|_| if self.rng.random::<f32>() < self.rate { 0.0 } else { keep })
                    .collect()
            }
        };
        let out = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.mask = Some(mask);
        Tensor::new(x.shape(), out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mask = self.mask.take().ok_or_else(|| Error::NoForward("Dropout".into()))?;
        if mask.len() != grad.len() {
            return Err(Error::shape("Dropout upstream gradient", &[mask.len()], &[grad.len()]));
        }
        let dx = grad.data().iter().zip(&mask).map(|(g, m)| g * m).collect();
        Tensor::new(grad.shape(), dx)
    }

    pub fn clear_cache(&mut self) {
        self.mask = None;
    }
}
