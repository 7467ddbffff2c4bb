use alloc::vec;
use alloc::vec::Vec;

use super::{Mode, Tensor};
use crate::{Error, Result};

/// 2x2 average pooling with stride 2. Spatial sides must be even.
#[derive(Debug, Clone, Default)]
pub struct AvgPool2 {
    input_shape: Option<Vec<usize>>,
}

impl AvgPool2 {
    pub fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let &[n, c, h, w] = x.shape() else {
            return Err(Error::shape("AvgPool2 input [N, C, H, W]", &[0, 0, 0, 0], x.shape()));
        };
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape("AvgPool2 even spatial size", &[h & !1, w & !1], &[h, w]));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = vec![0.0f32; n * c * oh * ow];
        for (p, dst) in out.chunks_exact_mut(oh * ow).enumerate() {
            let src = &x.data()[p * h * w..(p + 1) * h * w];
            for y in 0..oh {
                let r0 = &src[2 * y * w..(2 * y + 1) * w];
                let r1 = &src[(2 * y + 1) * w..(2 * y + 2) * w];
                for xx in 0..ow {
                    dst[y * ow + xx] = 0.25 * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
                }
            }
        }
        self.input_shape = Some(x.shape().to_vec());
        Tensor::new(&[n, c, oh, ow], out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = self.input_shape.take().ok_or_else(|| Error::NoForward("AvgPool2".into()))?;
        let (h, w) = (shape[2], shape[3]);
        let (oh, ow) = (h / 2, w / 2);
        let expected = [shape[0], shape[1], oh, ow];
        if grad.shape() != expected {
            return Err(Error::shape("AvgPool2 upstream gradient", &expected, grad.shape()));
        }
        let mut dx = vec![0.0f32; shape.iter().product()];
        for (p, g) in grad.data().chunks_exact(oh * ow).enumerate() {
            let dst = &mut dx[p * h * w..(p + 1) * h * w];
            for y in 0..h {
                for xx in 0..w {
                    dst[y * w + xx] = 0.25 * g[(y / 2) * ow + xx / 2];
                }
            }
        }
        Tensor::new(&shape, dx)
    }

    pub fn clear_cache(&mut self) {
        self.input_shape = None;
    }
}

/// Mean over all spatial positions: `[N, C, H, W] -> [N, C]`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    input_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let &[n, c, h, w] = x.shape() else {
            return Err(Error::shape("GlobalAvgPool input [N, C, H, W]", &[0, 0, 0, 0], x.shape()));
        };
        let area = (h * w) as f32;
        let out = x
            .data()
            .chunks_exact(h * w)
            .map(|plane| plane.iter().sum::<f32>() / area)
            .collect();
        self.input_shape = Some(x.shape().to_vec());
        Tensor::new(&[n, c], out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = self.input_shape.take().ok_or_else(|| Error::NoForward("GlobalAvgPool".into()))?;
        let expected = [shape[0], shape[1]];
        if grad.shape() != expected {
            return Err(Error::shape("GlobalAvgPool upstream gradient", &expected, grad.shape()));
        }
        let area = shape[2] * shape[3];
        let mut dx = Vec::with_capacity(grad.len() * area);
        for &g in grad.data() {
            dx.extend(core::iter::repeat_n(g / area as f32, area));
        }
        Tensor::new(&shape, dx)
    }

    pub fn clear_cache(&mut self) {
        self.input_shape = None;
    }
}
