use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{gemm, Mode, Param, Tensor};
use crate::{Error, Result};

/// Stride-1, same-padded 2-D convolution (odd kernels only).
///
/// Implemented as im2col followed by a matrix product. The column buffer is
/// recomputed in the backward pass rather than cached per sample.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    /// `[out, in * kh * kw]`
    pub weight: Param,
    pub bias: Param,
    /// When false the backward pass skips the input gradient (first layer).
    pub input_grad: bool,
    cache: Option<Tensor>,
    col: Vec<f32>,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        rng: &mut R,
    ) -> Result<Self> {
        if kernel.0 % 2 == 0 || kernel.1 % 2 == 0 {
            return Err(Error::Config(alloc::format!(
                "convolution kernel {}x{} must have odd sides",
                kernel.0,
                kernel.1
            )));
        }
        let fan_in = in_channels * kernel.0 * kernel.1;
        let limit = crate::math::sqrt(6.0 / fan_in as f32);
        let weight = (0..out_channels * fan_in)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            weight: Param::new(Tensor::new(&[out_channels, fan_in], weight)?),
            bias: Param::new(Tensor::zeros(&[out_channels])),
            input_grad: true,
            cache: None,
            col: Vec::new(),
        })
    }

    fn dims(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        match x.shape() {
            [n, c, h, w] if *c == self.in_channels => Ok((*n, *h, *w)),
            s => Err(Error::shape(
                "Conv2d input [N, C, H, W]",
                &[0, self.in_channels, 0, 0],
                s,
            )),
        }
    }

    pub fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (n, h, w) = self.dims(x)?;
        let (kh, kw) = self.kernel;
        let k = self.in_channels * kh * kw;
        let hw = h * w;
        self.col.resize(k * hw, 0.0);
        let mut out = vec![0.0f32; n * self.out_channels * hw];
        let item_in = self.in_channels * hw;
        let item_out = self.out_channels * hw;
        for i in 0..n {
            im2col(&x.data()[i * item_in..(i + 1) * item_in], self.in_channels, h, w, kh, kw, &mut self.col);
            let dst = &mut out[i * item_out..(i + 1) * item_out];
            for (o, b) in self.bias.value.data().iter().enumerate() {
                dst[o * hw..(o + 1) * hw].iter_mut().for_each(|v| *v = *b);
            }
            gemm(self.out_channels, k, hw, self.weight.value.data(), false, &self.col, false, dst, 1.0);
        }
        self.cache = Some(x.clone());
        Tensor::new(&[n, self.out_channels, h, w], out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.cache.take().ok_or_else(|| Error::NoForward("Conv2d".into()))?;
        let (n, h, w) = self.dims(&x)?;
        let expected = [n, self.out_channels, h, w];
        if grad.shape() != expected {
            return Err(Error::shape("Conv2d upstream gradient", &expected, grad.shape()));
        }
        let (kh, kw) = self.kernel;
        let k = self.in_channels * kh * kw;
        let hw = h * w;
        let item_in = self.in_channels * hw;
        let item_out = self.out_channels * hw;
        let mut dx = vec![0.0f32; if self.input_grad { x.len() } else { 0 }];
        let mut dcol = vec![0.0f32; if self.input_grad { k * hw } else { 0 }];
        self.col.resize(k * hw, 0.0);
        for i in 0..n {
            let g = &grad.data()[i * item_out..(i + 1) * item_out];
            for (o, db) in self.bias.grad.data_mut().iter_mut().enumerate() {
                *db += g[o * hw..(o + 1) * hw].iter().sum::<f32>();
            }
            im2col(&x.data()[i * item_in..(i + 1) * item_in], self.in_channels, h, w, kh, kw, &mut self.col);
            gemm(self.out_channels, hw, k, g, false, &self.col, true, self.weight.grad.data_mut(), 1.0);
            if self.input_grad {
                gemm(k, self.out_channels, hw, self.weight.value.data(), true, g, false, &mut dcol, 0.0);
                col2im(&dcol, self.in_channels, h, w, kh, kw, &mut dx[i * item_in..(i + 1) * item_in]);
            }
        }
        if self.input_grad {
            Tensor::new(x.shape(), dx)
        } else {
            Ok(Tensor::zeros(&[0]))
        }
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Signed column shift `kj - pad` applied to one image row.
#[inline]
fn shifted_row(dst: &mut [f32], src: &[f32], shift: isize) {
    let w = dst.len();
    if shift >= 0 {
        let s = (shift as usize).min(w);
        dst[..w - s].copy_from_slice(&src[s..]);
        dst[w - s..].fill(0.0);
    } else {
        let s = ((-shift) as usize).min(w);
        dst[..s].fill(0.0);
        dst[s..].copy_from_slice(&src[..w - s]);
    }
}

#[inline]
fn add_shifted_row(dst: &mut [f32], src: &[f32], shift: isize) {
    // adjoint of `shifted_row`: dst[x + shift] += src[x]
    let w = dst.len();
    if shift >= 0 {
        let s = (shift as usize).min(w);
        for (d, v) in dst[s..].iter_mut().zip(&src[..w - s]) {
            *d += v;
        }
    } else {
        let s = ((-shift) as usize).min(w);
        for (d, v) in dst[..w - s].iter_mut().zip(&src[s..]) {
            *d += v;
        }
    }
}

fn im2col(x: &[f32], c: usize, h: usize, w: usize, kh: usize, kw: usize, col: &mut [f32]) {
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((ci * kh + ki) * kw + kj) * hw;
                let shift = kj as isize - pw;
                for y in 0..h {
                    let dst = &mut col[row + y * w..row + (y + 1) * w];
                    let sy = y as isize + ki as isize - ph;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                    } else {
                        let sy = sy as usize;
                        shifted_row(dst, &plane[sy * w..(sy + 1) * w], shift);
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f32], c: usize, h: usize, w: usize, kh: usize, kw: usize, x: &mut [f32]) {
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let hw = h * w;
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((ci * kh + ki) * kw + kj) * hw;
                // im2col wrote col[x] = x[x + shift]; the adjoint adds back.
                let shift = kj as isize - pw;
                for y in 0..h {
                    let sy = y as isize + ki as isize - ph;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let src = &col[row + y * w..row + (y + 1) * w];
                    add_shifted_row(&mut x[ci * hw + sy * w..ci * hw + (sy + 1) * w], src, shift);
                }
            }
        }
    }
}
