//! Finite-difference checks beyond single layers: the linear combiner
//! trained through the joint encoder loss, and the mixture of experts.

use alloc::vec::Vec;
use alloc::format;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decoders::MoeLayer;
use crate::encoder::{encoder_loss, Combiner, CombinerKind, EncoderLossConfig};
use crate::nn::gradcheck::{layer_suite, numeric_gradient, relative_error, GradCheck, STEP};
use crate::nn::{add_l2_grad, Dense, LossConfig, Mode, Param, Tensor};
use crate::Result;

const N: usize = 3;
const D: usize = 5;
const C: usize = 3;

/// Three branch heads, a linear combiner and a combined head, scored with
/// the weighted four-term loss plus one L2 term over every parameter.
#[derive(Clone)]
struct MiniEncoder {
    heads: [Dense; 3],
    combiner: Combiner,
    com_head: Dense,
}

impl MiniEncoder {
    fn params(&mut self) -> Vec<&mut Param> {
        let mut p: Vec<&mut Param> = Vec::new();
        for h in &mut self.heads {
            p.push(&mut h.weight);
            p.push(&mut h.bias);
        }
        p.extend(self.combiner.params_mut());
        p.push(&mut self.com_head.weight);
        p.push(&mut self.com_head.bias);
        p
    }

    fn sum_sq(&mut self) -> f64 {
        self.params().iter().map(|p| p.value.sum_sq()).sum()
    }

    fn loss(&mut self, x: &[Tensor; 3], y: &Tensor, loss: &LossConfig) -> Result<(f64, [Tensor; 4])> {
        let mut logits = Vec::with_capacity(4);
        for (h, xk) in self.heads.iter_mut().zip(x) {
            logits.push(h.forward(xk, Mode::Train)?);
        }
        let z = self.combiner.forward([&x[0], &x[1], &x[2]])?;
        logits.push(self.com_head.forward(&z, Mode::Train)?);
        let logits: [Tensor; 4] = logits.try_into().expect("four heads");
        let ss = self.sum_sq();
        let cfg = EncoderLossConfig::default();
        let l = encoder_loss(&logits, y, &cfg, loss, ss)?;
        // Oracle value in f64; the f32 total is too coarse for differencing.
        let terms: Vec<f64> = logits.iter().map(|z| cross_entropy64(z, y)).collect();
        let total = cfg.alpha as f64 * (terms[0] + terms[1] + terms[2])
            + cfg.beta as f64 * terms[3]
            + 0.5 * loss.l2_lambda as f64 * ss;
        Ok((total, l.grads))
    }
}

/// Mean cross entropy of `softmax(logits)` against soft targets.
fn cross_entropy64(logits: &Tensor, y: &Tensor) -> f64 {
    let c = logits.shape()[1];
    let rows = logits.data().chunks_exact(c).zip(y.data().chunks_exact(c));
    let n = logits.batch() as f64;
    rows.map(|(z, t)| {
        let m = z.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
        let lse = m + libm::log(z.iter().map(|&v| libm::exp(v as f64 - m)).sum::<f64>());
        z.iter().zip(t).map(|(&zi, &ti)| -(ti as f64) * (zi as f64 - lse)).sum::<f64>()
    })
    .sum::<f64>()
        / n
}

/// Gradients of the joint loss with respect to the linear combiner weights
/// and the three branch features.
pub fn check_lin_comb_loss(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rand = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f32> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let x: [Tensor; 3] = [
        Tensor::new(&[N, D], rand(&mut rng, N * D))?,
        Tensor::new(&[N, D], rand(&mut rng, N * D))?,
        Tensor::new(&[N, D], rand(&mut rng, N * D))?,
    ];
    let mut y: Vec<f32> = (0..N * C).map(|_| rng.random_range(0.0..1.0)).collect();
    for row in y.chunks_mut(C) {
        let s: f32 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let y = Tensor::new(&[N, C], y)?;
    // Bias away from zero so no pre-activation sits on the ReLU kink.
    let bias: Vec<f32> = (0..D)
        .map(|_| {
            let b: f32 = rng.random_range(0.3..0.8);
            if rng.random_bool(0.5) { b } else { -b }
        })
        .collect();
    let combiner = Combiner::linear(rand(&mut rng, D), rand(&mut rng, D), rand(&mut rng, D), bias)?;
    let base = MiniEncoder {
        heads: [Dense::new(D, C, &mut rng), Dense::new(D, C, &mut rng), Dense::new(D, C, &mut rng)],
        combiner,
        com_head: Dense::new(D, C, &mut rng),
    };
    let loss = LossConfig {
        l2_lambda: 1e-2,
        ..LossConfig::default()
    };

    let mut analytic = base.clone();
    let (_, grads) = analytic.loss(&x, &y, &loss)?;
    for p in analytic.params() {
        p.zero_grad();
    }
    let mut dx: Vec<Tensor> = Vec::new();
    for (h, g) in analytic.heads.iter_mut().zip(&grads) {
        dx.push(h.backward(g)?);
    }
    let dz = analytic.com_head.backward(&grads[3])?;
    let dcomb = analytic.combiner.backward(&dz)?;
    for (d, c) in dx.iter_mut().zip(&dcomb) {
        for (a, b) in d.data_mut().iter_mut().zip(c.data()) {
            *a += b;
        }
    }
    add_l2_grad(analytic.params(), loss.l2_lambda);

    let mut out = Vec::new();
    let comb_offset = 6;
    for (i, name) in crate::encoder::LIN_PARAM_NAMES.iter().enumerate() {
        let pi = comb_offset + i;
        let start = base.clone().params()[pi].value.clone();
        let numeric = numeric_gradient(start.data(), STEP, |v| {
            let mut m = base.clone();
            m.params()[pi].value.data_mut().copy_from_slice(v);
            m.loss(&x, &y, &loss).expect("loss").0
        });
        out.push(GradCheck {
            name: format!("lin-comb {name} via joint loss"),
            max_rel_error: relative_error(analytic.params()[pi].grad.data(), &numeric),
            entries: numeric.len(),
        });
    }
    for k in 0..3 {
        let numeric = numeric_gradient(x[k].data(), STEP, |v| {
            let mut xs = x.clone();
            xs[k].data_mut().copy_from_slice(v);
            base.clone().loss(&xs, &y, &loss).expect("loss").0
        });
        out.push(GradCheck {
            name: format!("lin-comb branch {k} features via joint loss"),
            max_rel_error: relative_error(dx[k].data(), &numeric),
            entries: numeric.len(),
        });
    }
    Ok(out)
}

/// Sum and max combiners against a projection loss.
pub fn check_fixed_combiners(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for kind in [CombinerKind::Sum, CombinerKind::Max] {
        // Distinct values keep the max away from ties.
        let x: Vec<Tensor> = (0..3)
            .map(|k| {
                let v = (0..N * D).map(|i| ((i * 3 + k) as f32 * 0.37).sin() + rng.random_range(-0.01..0.01)).collect();
                Tensor::new(&[N, D], v)
            })
            .collect::<Result<_>>()?;
        let r: Vec<f32> = (0..N * D).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut comb = Combiner::new(kind, D);
        comb.forward([&x[0], &x[1], &x[2]])?;
        let dx = comb.backward(&Tensor::new(&[N, D], r.clone())?)?;
        for k in 0..3 {
            let numeric = numeric_gradient(x[k].data(), STEP, |v| {
                let mut xs = x.clone();
                xs[k].data_mut().copy_from_slice(v);
                let z = Combiner::new(kind, D).forward([&xs[0], &xs[1], &xs[2]]).expect("combine");
                z.data().iter().zip(&r).map(|(a, b)| *a as f64 * *b as f64).sum()
            });
            out.push(GradCheck {
                name: format!("{} input {k}", kind.name()),
                max_rel_error: relative_error(dx[k].data(), &numeric),
                entries: numeric.len(),
            });
        }
    }
    Ok(out)
}

/// Expert, gate and input gradients of the mixture layer.
pub fn check_moe(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = 3;
    let layer = MoeLayer::new(D, k, C, &mut rng)?;
    let z = Tensor::new(&[N, D], (0..N * D).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let r: Vec<f32> = (0..N * C).map(|_| rng.random_range(-1.0..1.0)).collect();
    let proj = |t: &Tensor| -> f64 { t.data().iter().zip(&r).map(|(a, b)| *a as f64 * *b as f64).sum() };

    let mut analytic = layer.clone();
    analytic.forward(&z, Mode::Train)?;
    let dz = analytic.backward(&Tensor::new(&[N, C], r.clone())?)?;

    let mut out = Vec::new();
    let numeric = numeric_gradient(z.data(), STEP, |v| {
        let zt = Tensor::new(&[N, D], v.to_vec()).expect("shape");
        proj(&layer.clone().forward(&zt, Mode::Train).expect("forward"))
    });
    out.push(GradCheck {
        name: "moe input".into(),
        max_rel_error: relative_error(dz.data(), &numeric),
        entries: numeric.len(),
    });
    let names: Vec<_> = layer.named_params("moe.").into_iter().map(|(n, _)| n).collect();
    for (pi, name) in names.iter().enumerate() {
        let start = layer.clone().params_mut()[pi].value.clone();
        let numeric = numeric_gradient(start.data(), STEP, |v| {
            let mut l = layer.clone();
            l.params_mut()[pi].value.data_mut().copy_from_slice(v);
            proj(&l.forward(&z, Mode::Train).expect("forward"))
        });
        out.push(GradCheck {
            name: name.clone(),
            max_rel_error: relative_error(analytic.params_mut()[pi].grad.data(), &numeric),
            entries: numeric.len(),
        });
    }
    Ok(out)
}

/// Every layer, the combiners and the mixture layer.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let mut out = layer_suite(seed)?;
    out.extend(check_lin_comb_loss(seed ^ 0x11)?);
    out.extend(check_fixed_combiners(seed ^ 0x22)?);
    out.extend(check_moe(seed ^ 0x33)?);
    Ok(out)
}
