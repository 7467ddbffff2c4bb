use multispec_core::encoder::{encoder_loss, EncoderLossConfig};
use multispec_core::nn::{cross_entropy, cross_entropy_l2, LossConfig, Param, Tensor};

/// Two-class logits whose cross entropy against class 0 is exactly `l`.
fn logits_with_loss(l: f64) -> Tensor {
    let p = (-l).exp();
    Tensor::new(&[1, 2], vec![p.ln() as f32, (1.0 - p).ln() as f32]).unwrap()
}

fn class0() -> Tensor {
    Tensor::new(&[1, 2], vec![1.0, 0.0]).unwrap()
}

fn no_l2() -> LossConfig {
    LossConfig {
        l2_lambda: 0.0,
        ..LossConfig::default()
    }
}

#[test]
fn equal_branches_and_combined() {
    let w = EncoderLossConfig::default();
    assert!((w.combine([0.9, 0.9, 0.9, 0.6]) - 1.5).abs() < 1e-6);
    let logits = [0.9, 0.9, 0.9, 0.6].map(logits_with_loss);
    let l = encoder_loss(&logits, &class0(), &w, &no_l2(), 0.0).unwrap();
    assert!((l.total - 1.5).abs() < 1e-6, "{}", l.total);
    for (t, want) in l.terms.iter().zip([0.9, 0.9, 0.9, 0.6]) {
        assert!((t - want).abs() < 1e-6);
    }
}

#[test]
fn unequal_branches() {
    // (0.5 + 1.0 + 1.5) / 3 + 0.3
    let logits = [0.5, 1.0, 1.5, 0.3].map(logits_with_loss);
    let l = encoder_loss(&logits, &class0(), &EncoderLossConfig::default(), &no_l2(), 0.0).unwrap();
    assert!((l.total - 1.3).abs() < 1e-6, "{}", l.total);
    // alpha = 0.5, beta = 2: 0.5 * 3.0 + 2 * 0.3
    let w = EncoderLossConfig { alpha: 0.5, beta: 2.0 };
    let l = encoder_loss(&logits, &class0(), &w, &no_l2(), 0.0).unwrap();
    assert!((l.total - 2.1).abs() < 1e-6, "{}", l.total);
}

#[test]
fn regularizer_counted_once() {
    let logits = [0.9, 0.9, 0.9, 0.6].map(logits_with_loss);
    let cfg = LossConfig {
        l2_lambda: 1e-2,
        ..LossConfig::default()
    };
    // 1.5 + 0.01 / 2 * 4
    let l = encoder_loss(&logits, &class0(), &EncoderLossConfig::default(), &cfg, 4.0).unwrap();
    assert!((l.l2 - 0.02).abs() < 1e-6);
    assert!((l.total - 1.52).abs() < 1e-6, "{}", l.total);
}

#[test]
fn decoder_loss() {
    let pred = Tensor::new(&[1, 3], vec![0.5, 0.25, 0.25]).unwrap();
    let y = Tensor::new(&[1, 3], vec![1.0, 0.0, 0.0]).unwrap();
    let ce = cross_entropy(&pred, &y, 1e-10).unwrap();
    assert!((ce as f64 - std::f64::consts::LN_2).abs() < 1e-6);

    // ln 2 + 0.1 / 2 * (1 + 4)
    let p = Param::new(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
    let cfg = LossConfig {
        l2_lambda: 0.1,
        ..LossConfig::default()
    };
    let l = cross_entropy_l2(&pred, &y, [&p], &cfg).unwrap();
    assert!((l as f64 - (std::f64::consts::LN_2 + 0.25)).abs() < 1e-6, "{l}");

    // soft target: -(0.5 ln 0.5 + 0.5 ln 0.25) = 1.5 ln 2
    let soft = Tensor::new(&[1, 3], vec![0.5, 0.5, 0.0]).unwrap();
    let ce = cross_entropy(&pred, &soft, 1e-10).unwrap();
    assert!((ce as f64 - 1.5 * std::f64::consts::LN_2).abs() < 1e-6);
}
