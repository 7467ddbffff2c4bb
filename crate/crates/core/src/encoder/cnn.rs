use alloc::vec::Vec;
use alloc::{format, vec};

use crate::nn::LayerSpec;
use crate::{Error, Result, FEATURE_DIM};

/// Blocks followed by 2x2 average pooling.
const POOLED: [bool; 6] = [true, true, false, true, false, false];

/// Six convolutional blocks, each
/// `BatchNorm - Conv - ReLU - BatchNorm - [AvgPool] - [GlobalAvgPool] - Dropout`.
/// Global pooling closes the last block, so the output is the channel
/// count of block six.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnConfig {
    pub channels: [usize; 6],
    pub kernels: [usize; 6],
    pub dropout: [f32; 6],
}

impl CnnConfig {
    /// Full-size widths: 128x128 -> 64x64x32 -> 32x32x64 -> 32x32x128 ->
    /// 16x16x128 -> 16x16x256 -> 256.
    pub fn full() -> Self {
        Self {
            channels: [32, 64, 128, 128, 256, FEATURE_DIM],
            kernels: [9, 7, 5, 5, 3, 3],
            dropout: [0.1, 0.15, 0.2, 0.2, 0.25, 0.25],
        }
    }

    /// Same topology with narrow hidden blocks, for single-machine runs.
    pub fn compact() -> Self {
        Self {
            channels: [4, 8, 8, 16, 16, FEATURE_DIM],
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels[5] != FEATURE_DIM {
            return Err(Error::Config(format!(
                "last CNN block must have {FEATURE_DIM} channels, got {}",
                self.channels[5]
            )));
        }
        if self.channels.contains(&0) {
            return Err(Error::Config("CNN channel counts must be positive".into()));
        }
        if self.kernels.iter().any(|k| k % 2 == 0) {
            return Err(Error::Config(format!("CNN kernels must be odd: {:?}", self.kernels)));
        }
        if self.dropout.iter().any(|d| !(0.0..1.0).contains(d)) {
            return Err(Error::Config(format!("CNN dropout rates must lie in [0, 1): {:?}", self.dropout)));
        }
        Ok(())
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        for b in 0..6 {
            let k = self.kernels[b];
            specs.push(LayerSpec::BatchNorm);
            specs.push(LayerSpec::Conv2d {
                kernel: (k, k),
                out_channels: self.channels[b],
            });
            specs.push(LayerSpec::Relu);
            specs.push(LayerSpec::BatchNorm);
            if POOLED[b] {
                specs.push(LayerSpec::AvgPool2);
            }
            if b == 5 {
                specs.push(LayerSpec::GlobalAvgPool);
            }
            specs.push(LayerSpec::Dropout(self.dropout[b]));
        }
        specs
    }
}

/// Per-branch classification head: one dense layer to `classes` logits.
pub fn head_specs(classes: usize) -> Vec<LayerSpec> {
    vec![LayerSpec::Dense(classes)]
}

/// Dense 512 and 1024 blocks (ReLU + dropout) and a dense output layer.
pub fn dnn2_specs(classes: usize, dropout: f32) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense(512),
        LayerSpec::Relu,
        LayerSpec::Dropout(dropout),
        LayerSpec::Dense(1024),
        LayerSpec::Relu,
        LayerSpec::Dropout(dropout),
        LayerSpec::Dense(classes),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mode, Sequential, Tensor};
    use crate::PATCH_SIZE;
    use rand::SeedableRng;

    #[test]
    fn full_shapes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let net = Sequential::new(&[1, PATCH_SIZE, PATCH_SIZE], &CnnConfig::full().specs(), &mut rng).unwrap();
        // block boundaries are the dropout layers
        let outs: Vec<&Vec<usize>> = net
            .specs()
            .iter()
            .zip(net.layer_shapes())
            .filter(|(s, _)| matches!(s, LayerSpec::Dropout(_)))
            .map(|(_, sh)| sh)
            .collect();
        let expected: [&[usize]; 6] = [
            &[32, 64, 64],
            &[64, 32, 32],
            &[128, 32, 32],
            &[128, 16, 16],
            &[256, 16, 16],
            &[256],
        ];
        for (o, e) in outs.iter().zip(expected) {
            assert_eq!(o.as_slice(), e);
        }
    }

    #[test]
    fn first_block_output() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let cfg = CnnConfig::full();
        let first: Vec<LayerSpec> = cfg.specs().into_iter().take(6).collect();
        let mut net = Sequential::new(&[1, PATCH_SIZE, PATCH_SIZE], &first, &mut rng).unwrap();
        let y = net.forward(&Tensor::filled(&[1, 1, 128, 128], 0.5), Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[1, 32, 64, 64]);
    }

    #[test]
    fn rejects_bad_width() {
        let mut cfg = CnnConfig::compact();
        cfg.channels[5] = 128;
        assert!(cfg.validate().is_err());
    }
}
