//! Central finite-difference checks of the hand-written backward passes.
//!
//! The numeric side only ever calls `forward` on a fresh clone of the layer,
//! so random state (dropout masks) is identical across evaluations and the
//! check never touches the analytic code path.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{softmax_cross_entropy, Layer, LayerSpec, Mode, Tensor};
use crate::Result;

/// Finite-difference step.
pub const STEP: f32 = 1e-3;
/// Largest accepted relative error.
pub const TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub entries: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

/// Largest absolute deviation, relative to the larger of the two gradients'
/// largest magnitudes. Elementwise ratios are meaningless for entries near
/// zero under `f32` rounding; this keeps the comparison at tensor scale.
pub fn relative_error(analytic: &[f32], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .map(|&a| (a as f64).abs())
        .chain(numeric.iter().map(|n| n.abs()))
        .fold(1e-6, f64::max);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a as f64 - n).abs())
        .fold(0.0, f64::max)
        / scale
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate `i`.
pub fn numeric_gradient(values: &[f32], h: f32, mut f: impl FnMut(&[f32]) -> f64) -> Vec<f64> {
    let mut x = values.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h as f64)
        })
        .collect()
}

fn dot(a: &Tensor, r: &[f32]) -> f64 {
    a.data().iter().zip(r).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, away_from_zero: bool) -> Vec<f32> {
    (0..n)
        .map(|_| loop {
            let v: f32 = rng.random_range(-1.0..1.0);
            if !away_from_zero || v.abs() > 0.05 {
                break v;
            }
        })
        .collect()
}

/// Checks the input gradient and every parameter gradient of one layer
/// against `L = sum(r * layer(x))` for a random projection `r`.
pub fn check_layer(spec: LayerSpec, input_shape: &[usize], mode: Mode, seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut layer, out_item) = Layer::build(spec, &input_shape[1..], &mut rng)?;
    if let Layer::BatchNorm(bn) = &mut layer {
        // Non-trivial affine and running statistics.
        for (g, b) in bn.gamma.value.data_mut().iter_mut().zip(bn.beta.value.data_mut()) {
            *g = rng.random_range(0.5..1.5);
            *b = rng.random_range(-0.5..0.5);
        }
        for (m, v) in bn.running_mean.iter_mut().zip(bn.running_var.iter_mut()) {
            *m = rng.random_range(-0.5..0.5);
            *v = rng.random_range(0.5..2.0);
        }
    }
    let n_in: usize = input_shape.iter().product();
    let x = Tensor::new(input_shape, random_vec(&mut rng, n_in, matches!(spec, LayerSpec::Relu)))?;
    let n_out = input_shape[0] * out_item.iter().product::<usize>();
    let r = random_vec(&mut rng, n_out, false);
    let mut out_shape = vec![input_shape[0]];
    out_shape.extend_from_slice(&out_item);

    let mut analytic = layer.clone();
    analytic.forward(&x, mode)?;
    let dx = analytic.backward(&Tensor::new(&out_shape, r.clone())?)?;

    let label = format!("{spec:?} {mode:?}");
    let mut reports = Vec::new();
    let numeric = numeric_gradient(x.data(), STEP, |xv| {
        let xt = Tensor::new(input_shape, xv.to_vec()).expect("same shape");
        let mut l = layer.clone();
        dot(&l.forward(&xt, mode).expect("forward"), &r)
    });
    reports.push(GradCheck {
        name: format!("{label} input"),
        max_rel_error: relative_error(dx.data(), &numeric),
        entries: numeric.len(),
    });

    let names: Vec<&str> = layer.params().iter().map(|(n, _)| *n).collect();
    for (pi, name) in names.iter().enumerate() {
        let base = layer.params()[pi].1.value.clone();
        let numeric = numeric_gradient(base.data(), STEP, |pv| {
            let mut l = layer.clone();
            l.params_mut()[pi].value.data_mut().copy_from_slice(pv);
            dot(&l.forward(&x, mode).expect("forward"), &r)
        });
        reports.push(GradCheck {
            name: format!("{label} {name}"),
            max_rel_error: relative_error(analytic.params()[pi].1.grad.data(), &numeric),
            entries: numeric.len(),
        });
    }
    Ok(reports)
}

/// Softmax followed by cross entropy against a random soft label.
pub fn check_softmax_cross_entropy(rows: usize, classes: usize, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = Tensor::new(&[rows, classes], random_vec(&mut rng, rows * classes, false))?;
    let mut y: Vec<f32> = (0..rows * classes).map(|_| rng.random_range(0.0..1.0)).collect();
    for row in y.chunks_exact_mut(classes) {
        let s: f32 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let target = Tensor::new(&[rows, classes], y)?;
    let (_, _, grad) = softmax_cross_entropy(&logits, &target, 1e-10)?;
    let numeric = numeric_gradient(logits.data(), STEP, |lv| {
        let l = Tensor::new(&[rows, classes], lv.to_vec()).expect("shape");
        softmax_cross_entropy(&l, &target, 1e-10).expect("loss").0 as f64
    });
    Ok(GradCheck {
        name: "Softmax+CrossEntropy logits".into(),
        max_rel_error: relative_error(grad.data(), &numeric),
        entries: numeric.len(),
    })
}

/// Every layer type on randomized instances of at most 5x5x3 per item.
pub fn layer_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let conv_in = [2, 3, 5, 5];
    let cases: [(LayerSpec, &[usize], Mode); 12] = [
        (LayerSpec::Conv2d { kernel: (3, 3), out_channels: 3 }, &conv_in, Mode::Train),
        (LayerSpec::Conv2d { kernel: (5, 5), out_channels: 2 }, &conv_in, Mode::Train),
        (LayerSpec::BatchNorm, &[4, 3, 5, 5], Mode::Train),
        (LayerSpec::BatchNorm, &[4, 3, 5, 5], Mode::Eval),
        (LayerSpec::BatchNorm, &[6, 5], Mode::Train),
        (LayerSpec::Relu, &conv_in, Mode::Train),
        (LayerSpec::AvgPool2, &[2, 3, 4, 4], Mode::Train),
        (LayerSpec::GlobalAvgPool, &conv_in, Mode::Train),
        (LayerSpec::Dropout(0.3), &conv_in, Mode::Train),
        (LayerSpec::Dropout(0.3), &conv_in, Mode::Eval),
        (LayerSpec::Dense(4), &[3, 5], Mode::Train),
        (LayerSpec::Softmax, &[3, 5], Mode::Train),
    ];
    let mut out = Vec::new();
    for (i, (spec, shape, mode)) in cases.iter().enumerate() {
        out.extend(check_layer(*spec, shape, *mode, seed.wrapping_add(i as u64))?);
    }
    out.push(check_softmax_cross_entropy(3, 5, seed ^ 0x5eed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes() {
        for seed in [1u64, 2, 3] {
            for report in layer_suite(seed).unwrap() {
                assert!(report.passed(), "{} err {}", report.name, report.max_rel_error);
            }
        }
    }

    #[test]
    fn relative_error_detects_wrong_gradient() {
        assert!(relative_error(&[1.0, 2.0], &[1.0, 2.0]) < 1e-12);
        assert!(relative_error(&[1.0, 2.0], &[1.0, -2.0]) > 1.0);
    }
}
