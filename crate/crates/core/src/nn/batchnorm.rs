use alloc::vec;
use alloc::vec::Vec;

use super::{Mode, Param, Tensor};
use crate::math::sqrt;
use crate::{Error, Result};

/// Per-channel batch normalization over `[N, C, ...]` inputs.
///
/// Train mode normalizes with batch statistics and folds them into the
/// running estimates (`running = momentum * running + (1 - momentum) * batch`);
/// Eval mode uses the running estimates only.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub momentum: f32,
    pub eps: f32,
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    shape: Vec<usize>,
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
    mode: Mode,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::new(Tensor::filled(&[channels], 1.0)),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.9,
            eps: 1e-5,
            cache: None,
        }
    }

    fn layout(&self, x: &Tensor) -> Result<(usize, usize)> {
        let s = x.shape();
        if s.len() < 2 || s[1] != self.channels {
            return Err(Error::shape("BatchNorm input [N, C, ...]", &[0, self.channels], s));
        }
        Ok((s[0], s[2..].iter().product()))
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (n, spatial) = self.layout(x)?;
        let c = self.channels;
        let count = (n * spatial) as f64;
        let mut inv_std = vec![0.0f32; c];
        let mut xhat = vec![0.0f32; x.len()];
        let mut out = vec![0.0f32; x.len()];
        let idx = |i: usize, ch: usize| (i * c + ch) * spatial;
        for ch in 0..c {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut sum = 0.0f64;
                    for i in 0..n {
                        sum += x.data()[idx(i, ch)..idx(i, ch) + spatial].iter().map(|&v| v as f64).sum::<f64>();
                    }
                    let mean = sum / count;
                    let mut sq = 0.0f64;
                    for i in 0..n {
                        sq += x.data()[idx(i, ch)..idx(i, ch) + spatial]
                            .iter()
                            .map(|&v| (v as f64 - mean) * (v as f64 - mean))
                            .sum::<f64>();
                    }
                    let var = sq / count;
                    let unbiased = if count > 1.0 { sq / (count - 1.0) } else { var };
                    let m = self.momentum;
                    self.running_mean[ch] = m * self.running_mean[ch] + (1.0 - m) * mean as f32;
                    self.running_var[ch] = m * self.running_var[ch] + (1.0 - m) * unbiased as f32;
                    (mean as f32, var as f32)
                }
                Mode::Eval => (self.running_mean[ch], self.running_var[ch]),
            };
            let istd = 1.0 / sqrt(var + self.eps);
            inv_std[ch] = istd;
            let (g, b) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            for i in 0..n {
                let r = idx(i, ch)..idx(i, ch) + spatial;
                for ((xh, o), &v) in xhat[r.clone()].iter_mut().zip(&mut out[r.clone()]).zip(&x.data()[r]) {
                    *xh = (v - mean) * istd;
                    *o = g * *xh + b;
                }
            }
        }
        self.cache = Some(Cache {
            shape: x.shape().to_vec(),
            xhat,
            inv_std,
            mode,
        });
        Tensor::new(x.shape(), out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| Error::NoForward("BatchNorm".into()))?;
        if grad.shape() != cache.shape.as_slice() {
            return Err(Error::shape("BatchNorm upstream gradient", &cache.shape, grad.shape()));
        }
        let n = cache.shape[0];
        let spatial: usize = cache.shape[2..].iter().product();
        let c = self.channels;
        let m = (n * spatial) as f32;
        let mut dx = vec![0.0f32; grad.len()];
        let idx = |i: usize, ch: usize| (i * c + ch) * spatial;
        for ch in 0..c {
            let g = self.gamma.value.data()[ch];
            let (mut sum_dy, mut sum_dy_xhat) = (0.0f64, 0.0f64);
            for i in 0..n {
                let r = idx(i, ch)..idx(i, ch) + spatial;
                for (&dy, &xh) in grad.data()[r.clone()].iter().zip(&cache.xhat[r]) {
                    sum_dy += dy as f64;
                    sum_dy_xhat += dy as f64 * xh as f64;
                }
            }
            self.beta.grad.data_mut()[ch] += sum_dy as f32;
            self.gamma.grad.data_mut()[ch] += sum_dy_xhat as f32;
            let istd = cache.inv_std[ch];
            for i in 0..n {
                let r = idx(i, ch)..idx(i, ch) + spatial;
                let dst = &mut dx[r.clone()];
                match cache.mode {
                    Mode::Train => {
                        let (mean_dy, mean_dy_xhat) = (sum_dy as f32 / m, sum_dy_xhat as f32 / m);
                        for ((d, &dy), &xh) in dst.iter_mut().zip(&grad.data()[r.clone()]).zip(&cache.xhat[r]) {
                            *d = g * istd * (dy - mean_dy - xh * mean_dy_xhat);
                        }
                    }
                    Mode::Eval => {
                        for (d, &dy) in dst.iter_mut().zip(&grad.data()[r]) {
                            *d = g * istd * dy;
                        }
                    }
                }
            }
        }
        Tensor::new(&cache.shape, dx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
