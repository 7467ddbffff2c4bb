use alloc::vec;

use rand::Rng;

use super::{gemm, Mode, Param, Tensor};
use crate::{Error, Result};

/// Fully connected layer `y = x W + b` with `W: [in, out]`.
///
/// Inputs with more than two dimensions are flattened per batch item.
#[derive(Debug, Clone)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Param,
    pub bias: Param,
    cache: Option<Tensor>,
}

impl Dense {
    /// He-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = crate::math::sqrt(6.0 / in_dim.max(1) as f32);
        let w = (0..in_dim * out_dim).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            in_dim,
            out_dim,
            weight: Param::new(Tensor::new(&[in_dim, out_dim], w).expect("dense weight shape")),
            bias: Param::new(Tensor::zeros(&[out_dim])),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        if x.shape().len() < 2 || x.item_len() != self.in_dim {
            return Err(Error::shape("Dense input [N, in]", &[0, self.in_dim], x.shape()));
        }
        let n = x.batch();
        let mut out = vec![0.0f32; n * self.out_dim];
        for row in out.chunks_exact_mut(self.out_dim) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(n, self.in_dim, self.out_dim, x.data(), false, self.weight.value.data(), false, &mut out, 1.0);
        self.cache = Some(x.clone());
        Tensor::new(&[n, self.out_dim], out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.cache.take().ok_or_else(|| Error::NoForward("Dense".into()))?;
        let n = x.batch();
        if grad.shape() != [n, self.out_dim] {
            return Err(Error::shape("Dense upstream gradient", &[n, self.out_dim], grad.shape()));
        }
        gemm(self.in_dim, n, self.out_dim, x.data(), true, grad.data(), false, self.weight.grad.data_mut(), 1.0);
        for row in grad.data().chunks_exact(self.out_dim) {
            for (b, g) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *b += g;
            }
        }
        let mut dx = vec![0.0f32; n * self.in_dim];
        gemm(n, self.out_dim, self.in_dim, grad.data(), false, self.weight.value.data(), true, &mut dx, 0.0);
        Tensor::new(x.shape(), dx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
