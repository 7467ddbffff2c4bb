use alloc::vec::Vec;

use super::{Param, Tensor};
use crate::math::{exp, ln};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the `(lambda / 2) * ||theta||^2` regularizer.
    pub l2_lambda: f32,
    /// Probabilities are clamped here before the logarithm.
    pub log_floor: f32,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 1e-4,
            log_floor: 1e-10,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_lambda >= 0.0) || !(self.log_floor > 0.0) {
            return Err(Error::Config("l2_lambda must be >= 0 and log_floor > 0".into()));
        }
        Ok(())
    }
}

/// Numerically stable row-wise softmax of `[N, D]` logits.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let d = *logits.shape().last().unwrap_or(&1);
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(d.max(1)) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let start = out.len();
        let mut sum = 0.0f32;
        for &v in row {
            let e = exp(v - max);
            sum += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|e| *e /= sum);
    }
    Tensor::new(logits.shape(), out).expect("softmax keeps shape")
}

fn check_pair(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() || pred.shape().len() != 2 {
        return Err(Error::shape("cross entropy [N, C]", pred.shape(), target.shape()));
    }
    if !pred.is_finite() || !target.is_finite() {
        return Err(Error::NonFinite("cross entropy inputs".into()));
    }
    Ok(())
}

/// Mean over rows of `-sum_c y_c * ln(max(p_c, floor))`.
///
/// `pred` rows must be probability vectors (sum 1 within 1e-5).
pub fn cross_entropy(pred: &Tensor, target: &Tensor, log_floor: f32) -> Result<f32> {
    check_pair(pred, target)?;
    let c = pred.shape()[1];
    let n = pred.shape()[0];
    let mut total = 0.0f64;
    for (p, y) in pred.data().chunks_exact(c).zip(target.data().chunks_exact(c)) {
        let s: f32 = p.iter().sum();
        if (s - 1.0).abs() > 1e-5 {
            return Err(Error::Invalid(alloc::format!("prediction row sums to {s}, not 1")));
        }
        total -= p
            .iter()
            .zip(y)
            .map(|(&pv, &yv)| yv as f64 * ln(pv.max(log_floor)) as f64)
            .sum::<f64>();
    }
    Ok((total / n.max(1) as f64) as f32)
}

/// `||theta||^2` over every listed parameter.
pub fn l2_penalty<'a>(params: impl IntoIterator<Item = &'a Param>) -> f64 {
    params.into_iter().map(|p| p.value.sum_sq()).sum()
}

/// Cross entropy plus `(lambda / 2) * ||theta||^2`.
pub fn cross_entropy_l2<'a>(
    pred: &Tensor,
    target: &Tensor,
    params: impl IntoIterator<Item = &'a Param>,
    cfg: &LossConfig,
) -> Result<f32> {
    let data = cross_entropy(pred, target, cfg.log_floor)?;
    Ok(data + (0.5 * cfg.l2_lambda as f64 * l2_penalty(params)) as f32)
}

/// Loss, probabilities and `dLoss/dlogits = (p - y) / N` for softmax
/// followed by cross entropy. Target rows must sum to one.
pub fn softmax_cross_entropy(logits: &Tensor, target: &Tensor, log_floor: f32) -> Result<(f32, Tensor, Tensor)> {
    check_pair(logits, target)?;
    let probs = softmax_rows(logits);
    let loss = cross_entropy(&probs, target, log_floor)?;
    let n = logits.shape()[0].max(1) as f32;
    let grad = probs
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, y)| (p - y) / n)
        .collect();
    Ok((loss, probs, Tensor::new(logits.shape(), grad)?))
}

/// Adds the regularizer gradient `lambda * theta` to every parameter.
pub fn add_l2_grad<'a>(params: impl IntoIterator<Item = &'a mut Param>, lambda: f32) {
    if lambda == 0.0 {
        return;
    }
    for p in params {
        let Param { value, grad } = p;
        for (g, v) in grad.data_mut().iter_mut().zip(value.data()) {
            *g += lambda * v;
        }
    }
}
