use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::moe::MoeLayer;
use crate::augment::{mix_into, MixupConfig, MixupPlan, MixupStage};
use crate::encoder::epoch_seed;
use crate::nn::{
    add_l2_grad, load_param, save_param, softmax_cross_entropy, softmax_rows, Adam, AdamConfig, LayerSpec, LossConfig,
    Mode, Param, Sequential, StateDict, Tensor,
};
use crate::{Error, Result, FEATURE_DIM};

/// Hidden widths shared by both neural decoders.
pub const HIDDEN: [usize; 3] = [512, 1024, 1024];

fn hidden_specs(dropout: f32) -> Vec<LayerSpec> {
    HIDDEN
        .iter()
        .flat_map(|&w| [LayerSpec::Dense(w), LayerSpec::Relu, LayerSpec::Dropout(dropout)])
        .collect()
}

/// Dense classifier `256 - 512 - 1024 - 1024 - C`.
pub fn dnn3_specs(classes: usize, dropout: f32) -> Vec<LayerSpec> {
    let mut s = hidden_specs(dropout);
    s.push(LayerSpec::Dense(classes));
    s
}

/// Mixture-of-experts trunk: the three hidden blocks, then a linear
/// projection back to the 256-d expert input.
pub fn moe_trunk_specs(dropout: f32) -> Vec<LayerSpec> {
    let mut s = hidden_specs(dropout);
    s.push(LayerSpec::Dense(FEATURE_DIM));
    s
}

/// The two trainable decoder networks. Both map `[N, 256]` features to
/// `[N, C]` logits.
#[derive(Debug, Clone)]
pub enum NeuralNet {
    Dnn(Sequential),
    Moe { trunk: Sequential, moe: MoeLayer },
}

impl NeuralNet {
    pub fn dnn(classes: usize, dropout: f32, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(NeuralNet::Dnn(Sequential::new(&[FEATURE_DIM], &dnn3_specs(classes, dropout), &mut rng)?))
    }

    pub fn moe(classes: usize, experts: usize, dropout: f32, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunk = Sequential::new(&[FEATURE_DIM], &moe_trunk_specs(dropout), &mut rng)?;
        let moe = MoeLayer::new(FEATURE_DIM, experts, classes, &mut rng)?;
        Ok(NeuralNet::Moe { trunk, moe })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            NeuralNet::Dnn(net) => net.forward(x, mode),
            NeuralNet::Moe { trunk, moe } => {
                let z = trunk.forward(x, mode)?;
                moe.forward(&z, mode)
            }
        }
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<()> {
        match self {
            NeuralNet::Dnn(net) => net.backward(grad).map(drop),
            NeuralNet::Moe { trunk, moe } => {
                let dz = moe.backward(grad)?;
                trunk.backward(&dz).map(drop)
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            NeuralNet::Dnn(net) => net.params_mut(),
            NeuralNet::Moe { trunk, moe } => {
                let mut p = trunk.params_mut();
                p.extend(moe.params_mut());
                p
            }
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Param)> {
        match self {
            NeuralNet::Dnn(net) => net.named_params("dnn3."),
            NeuralNet::Moe { trunk, moe } => {
                let mut p = trunk.named_params("moe.trunk.");
                p.extend(moe.named_params("moe."));
                p
            }
        }
    }

    pub fn sum_sq(&self) -> f64 {
        self.named_params().iter().map(|(_, p)| p.value.sum_sq()).sum()
    }

    pub fn save_state(&self, dict: &mut StateDict) -> Result<()> {
        for (name, p) in self.named_params() {
            save_param(dict, name, p)?;
        }
        Ok(())
    }

    pub fn load_state(&mut self, dict: &StateDict) -> Result<()> {
        let names: Vec<String> = self.named_params().into_iter().map(|(n, _)| n).collect();
        for (name, p) in names.iter().zip(self.params_mut()) {
            load_param(dict, name, p)?;
        }
        Ok(())
    }

    /// Class probabilities in Eval mode, computed on a private copy.
    pub fn predict(&self, x: &[Vec<f32>], batch: usize) -> Result<Vec<Vec<f32>>> {
        let mut net = self.clone();
        let mut out = Vec::with_capacity(x.len());
        for chunk in x.chunks(batch.max(1)) {
            let t = Tensor::stack(&[FEATURE_DIM], chunk.iter().map(|r| r.as_slice()))?;
            let p = softmax_rows(&net.forward(&t, Mode::Eval)?);
            let c = p.shape()[1];
            out.extend(p.data().chunks_exact(c).map(|r| r.to_vec()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuralTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: LossConfig,
    /// Feature-stage mixup, redrawn every epoch.
    pub mixup: MixupConfig,
    pub seed: u64,
}

impl Default for NeuralTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 50,
            adam: AdamConfig::default(),
            loss: LossConfig::default(),
            mixup: MixupConfig::feature(0),
            seed: 0,
        }
    }
}

/// Mean training loss (cross entropy plus regularizer) per epoch.
pub fn train_neural(
    net: &mut NeuralNet,
    x: &[Vec<f32>],
    y: &[Vec<f32>],
    cfg: &NeuralTrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if cfg.mixup.stage != MixupStage::Feature {
        return Err(Error::Config("decoder training needs feature-stage mixup".into()));
    }
    cfg.loss.validate()?;
    let classes = y[0].len();
    let mut adam = Adam::new(cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut mix = cfg.mixup;
        mix.seed = epoch_seed(cfg.mixup.seed, epoch);
        let mut plan = MixupPlan::new(x.len(), &mix)?;
        plan.entries.shuffle(&mut rng);
        let mut sum = 0.0f64;
        for batch in plan.entries.chunks(cfg.batch_size) {
            let b = batch.len();
            let mut xb = vec![0.0f32; b * FEATURE_DIM];
            let mut yb = vec![0.0f32; b * classes];
            for (r, e) in batch.iter().enumerate() {
                mix_into(&x[e.first], &x[e.second], e.lambda, &mut xb[r * FEATURE_DIM..(r + 1) * FEATURE_DIM]);
                mix_into(&y[e.first], &y[e.second], e.lambda, &mut yb[r * classes..(r + 1) * classes]);
            }
            let logits = net.forward(&Tensor::new(&[b, FEATURE_DIM], xb)?, Mode::Train)?;
            let (ce, _, grad) = softmax_cross_entropy(&logits, &Tensor::new(&[b, classes], yb)?, cfg.loss.log_floor)?;
            let l2 = 0.5 * cfg.loss.l2_lambda as f64 * net.sum_sq();
            let loss = ce as f64 + l2;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("decoder loss at epoch {epoch}")));
            }
            for p in net.params_mut() {
                p.zero_grad();
            }
            net.backward(&grad)?;
            let mut params = net.params_mut();
            add_l2_grad(params.iter_mut().map(|p| &mut **p), cfg.loss.l2_lambda);
            adam.step(&mut params)?;
            sum += loss * b as f64;
        }
        let mean = sum / plan.len() as f64;
        on_epoch(epoch, mean);
        losses.push(mean);
    }
    for p in net.params_mut() {
        p.zero_grad();
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dnn3_parameter_shapes() {
        let net = NeuralNet::dnn(5, 0.3, 0).unwrap();
        let shapes: Vec<Vec<usize>> = net.named_params().iter().map(|(_, p)| p.value.shape().to_vec()).collect();
        assert_eq!(
            shapes,
            vec![
                vec![256, 512],
                vec![512],
                vec![512, 1024],
                vec![1024],
                vec![1024, 1024],
                vec![1024],
                vec![1024, 5],
                vec![5],
            ]
        );
    }

    #[test]
    fn moe_gate_has_k_outputs() {
        let net = NeuralNet::moe(4, 10, 0.3, 0).unwrap();
        let NeuralNet::Moe { moe, .. } = &net else { unreachable!() };
        assert_eq!(moe.gate.weight.value.shape(), &[256, 10]);
        assert_eq!(moe.experts.weight.value.shape(), &[256, 40]);
    }
}
