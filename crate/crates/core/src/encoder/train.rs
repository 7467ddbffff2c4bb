use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{EncoderConfig, EncoderModel, FeatureSource};
use crate::augment::{mix_into, one_hot, MixupConfig, MixupPlan, MixupStage};
use crate::dsp::{Patch, PatchKey, SpectrogramKind};
use crate::nn::{add_l2_grad, softmax_cross_entropy, softmax_rows, Adam, AdamConfig, LossConfig, Mode, Tensor};
use crate::{par, Error, Result, FEATURE_DIM, PATCH_SIZE};

const PATCH_LEN: usize = PATCH_SIZE * PATCH_SIZE;

/// Patch triples keyed by `(segment, index)`, one patch per spectrogram kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlignedPatches {
    pub keys: Vec<PatchKey>,
    /// `patches[kind][i]` in [`SpectrogramKind::ALL`] order.
    pub patches: [Vec<Vec<f32>>; 3],
    pub labels: Vec<Option<usize>>,
    pub devices: Vec<Option<String>>,
}

impl AlignedPatches {
    /// Matches the three lists by key. The order follows the log-Mel list.
    /// Keys missing from any kind are reported together.
    pub fn align(lm: Vec<Patch>, ga: Vec<Patch>, cq: Vec<Patch>) -> Result<Self> {
        let lists = [lm, ga, cq];
        for (list, kind) in lists.iter().zip(SpectrogramKind::ALL) {
            if let Some(p) = list.iter().find(|p| p.kind != kind) {
                return Err(Error::Invalid(format!(
                    "{} patch {}#{} found in the {} list",
                    p.kind.name(),
                    p.key.segment_id,
                    p.key.index,
                    kind.name()
                )));
            }
            if let Some(p) = list.iter().find(|p| p.values.len() != PATCH_LEN) {
                return Err(Error::shape("patch values", &[PATCH_LEN], &[p.values.len()]));
            }
        }
        let key_sets: Vec<BTreeSet<&PatchKey>> = lists.iter().map(|l| l.iter().map(|p| &p.key).collect()).collect();
        let all: BTreeSet<&PatchKey> = key_sets.iter().flatten().copied().collect();
        let orphans: Vec<String> = all
            .iter()
            .filter(|k| key_sets.iter().any(|s| !s.contains(*k)))
            .map(|k| format!("{}#{}", k.segment_id, k.index))
            .collect();
        if !orphans.is_empty() {
            return Err(Error::Misaligned { orphans });
        }
        let [lm, ga, cq] = lists;
        let mut ga: BTreeMap<PatchKey, Patch> = ga.into_iter().map(|p| (p.key.clone(), p)).collect();
        let mut cq: BTreeMap<PatchKey, Patch> = cq.into_iter().map(|p| (p.key.clone(), p)).collect();
        let mut out = Self::default();
        for p in lm {
            let g = ga.remove(&p.key).ok_or_else(|| Error::Invalid(format!("duplicate patch key {:?}", p.key)))?;
            let c = cq.remove(&p.key).ok_or_else(|| Error::Invalid(format!("duplicate patch key {:?}", p.key)))?;
            out.keys.push(p.key);
            out.labels.push(p.label);
            out.devices.push(p.device_id);
            out.patches[0].push(p.values);
            out.patches[1].push(g.values);
            out.patches[2].push(c.values);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn extend(&mut self, other: AlignedPatches) {
        self.keys.extend(other.keys);
        self.labels.extend(other.labels);
        self.devices.extend(other.devices);
        for (dst, src) in self.patches.iter_mut().zip(other.patches) {
            dst.extend(src);
        }
    }

    /// Triples whose segment satisfies `keep`.
    pub fn filter_segments(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let mut out = Self::default();
        for i in 0..self.len() {
            if keep(&self.keys[i].segment_id) {
                out.keys.push(self.keys[i].clone());
                out.labels.push(self.labels[i]);
                out.devices.push(self.devices[i].clone());
                for k in 0..3 {
                    out.patches[k].push(self.patches[k][i].clone());
                }
            }
        }
        out
    }

    /// One-hot training targets; every triple needs a label below `classes`.
    pub fn one_hot_labels(&self, classes: usize) -> Result<Vec<Vec<f32>>> {
        self.labels
            .iter()
            .zip(&self.keys)
            .map(|(l, k)| match l {
                Some(c) if *c < classes => Ok(one_hot(*c, classes)),
                Some(c) => Err(Error::Invalid(format!("label {c} out of range for {classes} classes"))),
                None => Err(Error::Invalid(format!("patch {}#{} has no label", k.segment_id, k.index))),
            })
            .collect()
    }

    fn batch_tensors(&self, idx: &[usize]) -> Result<[Tensor; 3]> {
        let shape = [idx.len(), 1, PATCH_SIZE, PATCH_SIZE];
        let make = |k: usize| Tensor::new(&shape, idx.iter().flat_map(|&i| self.patches[k][i].iter().copied()).collect());
        Ok([make(0)?, make(1)?, make(2)?])
    }
}

/// Weights of the branch and combined terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderLossConfig {
    pub alpha: f32,
    pub beta: f32,
}

impl Default for EncoderLossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0 / 3.0,
            beta: 1.0,
        }
    }
}

impl EncoderLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Config(format!("alpha and beta must be >= 0 (got {}, {})", self.alpha, self.beta)));
        }
        Ok(())
    }

    /// `alpha * (l_lm + l_ga + l_cq) + beta * l_com`
    pub fn combine(&self, terms: [f32; 4]) -> f32 {
        self.alpha * (terms[0] + terms[1] + terms[2]) + self.beta * terms[3]
    }
}

#[derive(Debug, Clone)]
pub struct EncoderLoss {
    /// Cross-entropy terms in [`FeatureSource`] order.
    pub terms: [f32; 4],
    /// `(lambda / 2) * ||theta||^2`, counted once.
    pub l2: f32,
    pub total: f32,
    /// Gradients of `total - l2` with respect to each logit set.
    pub grads: [Tensor; 4],
}

/// Weighted sum of the four cross-entropy terms plus one regularizer over
/// the whole parameter vector, whose squared norm is `sum_sq`.
pub fn encoder_loss(
    logits: &[Tensor; 4],
    target: &Tensor,
    cfg: &EncoderLossConfig,
    loss: &LossConfig,
    sum_sq: f64,
) -> Result<EncoderLoss> {
    cfg.validate()?;
    loss.validate()?;
    let mut terms = [0.0f32; 4];
    let mut grads = Vec::with_capacity(4);
    for k in 0..4 {
        let (l, _, mut g) = softmax_cross_entropy(&logits[k], target, loss.log_floor)?;
        let w = if k < 3 { cfg.alpha } else { cfg.beta };
        g.data_mut().iter_mut().for_each(|v| *v *= w);
        terms[k] = l;
        grads.push(g);
    }
    let grads: [Tensor; 4] = grads.try_into().expect("four heads");
    let l2 = (0.5 * loss.l2_lambda as f64 * sum_sq) as f32;
    Ok(EncoderLoss {
        terms,
        l2,
        total: cfg.combine(terms) + l2,
        grads,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: LossConfig,
    pub weights: EncoderLossConfig,
    /// Patch-stage mixup; the plan is redrawn every epoch.
    pub mixup: MixupConfig,
    /// Seeds the batch order.
    pub seed: u64,
}

impl Default for EncoderTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 50,
            adam: AdamConfig::default(),
            loss: LossConfig::default(),
            weights: EncoderLossConfig::default(),
            mixup: MixupConfig::patch(0),
            seed: 0,
        }
    }
}

impl EncoderTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.mixup.stage != MixupStage::Patch {
            return Err(Error::Config("encoder training needs patch-stage mixup".into()));
        }
        self.mixup.validate()?;
        self.loss.validate()?;
        self.weights.validate()
    }
}

/// Mean loss terms over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub terms: [f64; 4],
    pub l2: f64,
    pub total: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.total)
    }
}

/// Epoch-specific seed so each epoch sees fresh mixup partners.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains a fresh encoder with Adam on mixup-augmented patch triples.
pub fn train_encoder(
    config: &EncoderConfig,
    data: &AlignedPatches,
    train: &EncoderTrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(EncoderModel, TrainingLog)> {
    train.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("encoder training set".into()));
    }
    let labels = data.one_hot_labels(config.classes)?;
    let mut model = EncoderModel::new(*config)?;
    let mut adam = Adam::new(train.adam);
    let mut order_rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut log = TrainingLog::default();
    let classes = config.classes;
    let mut bufs = [vec![], vec![], vec![]];
    for epoch in 0..train.epochs {
        let mut mix = train.mixup;
        mix.seed = epoch_seed(train.mixup.seed, epoch);
        let mut plan = MixupPlan::new(data.len(), &mix)?;
        plan.entries.shuffle(&mut order_rng);
        let mut sums = [0.0f64; 6];
        for batch in plan.entries.chunks(train.batch_size) {
            let b = batch.len();
            let mut y = vec![0.0f32; b * classes];
            for (k, buf) in bufs.iter_mut().enumerate() {
                buf.resize(b * PATCH_LEN, 0.0);
                for (r, e) in batch.iter().enumerate() {
                    mix_into(
                        &data.patches[k][e.first],
                        &data.patches[k][e.second],
                        e.lambda,
                        &mut buf[r * PATCH_LEN..(r + 1) * PATCH_LEN],
                    );
                }
            }
            for (r, e) in batch.iter().enumerate() {
                mix_into(&labels[e.first], &labels[e.second], e.lambda, &mut y[r * classes..(r + 1) * classes]);
            }
            let shape = [b, 1, PATCH_SIZE, PATCH_SIZE];
            let x: [Tensor; 3] = [
                Tensor::new(&shape, core::mem::take(&mut bufs[0]))?,
                Tensor::new(&shape, core::mem::take(&mut bufs[1]))?,
                Tensor::new(&shape, core::mem::take(&mut bufs[2]))?,
            ];
            let target = Tensor::new(&[b, classes], y)?;
            let out = model.forward([&x[0], &x[1], &x[2]], Mode::Train)?;
            let loss = encoder_loss(&out.logits, &target, &train.weights, &train.loss, model.sum_sq())?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite(format!("encoder loss at epoch {epoch}")));
            }
            model.zero_grad();
            model.backward(&loss.grads)?;
            let mut params = model.params_mut();
            add_l2_grad(params.iter_mut().map(|p| &mut **p), train.loss.l2_lambda);
            adam.step(&mut params)?;
            for (i, t) in loss.terms.iter().enumerate() {
                sums[i] += *t as f64 * b as f64;
            }
            sums[4] += loss.l2 as f64 * b as f64;
            sums[5] += loss.total as f64 * b as f64;
            for (buf, t) in bufs.iter_mut().zip(x) {
                *buf = t.into_data();
            }
        }
        let n = plan.len() as f64;
        let entry = EpochLog {
            epoch,
            terms: [sums[0] / n, sums[1] / n, sums[2] / n, sums[3] / n],
            l2: sums[4] / n,
            total: sums[5] / n,
            samples: plan.len(),
        };
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    model.zero_grad();
    Ok((model, log))
}

/// A 256-d encoder output with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct HighLevelFeature {
    pub key: PatchKey,
    pub source: FeatureSource,
    pub values: Vec<f32>,
    pub label: Option<usize>,
    pub device_id: Option<String>,
}

/// Eval-mode features and head probabilities of every triple.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// Four per triple, in triple order then [`FeatureSource`] order.
    pub features: Vec<HighLevelFeature>,
    /// Softmax of the four heads, `probs[source][triple]`.
    pub probs: [Vec<Vec<f32>>; 4],
}

impl Extraction {
    pub fn of_source(&self, source: FeatureSource) -> impl Iterator<Item = &HighLevelFeature> {
        self.features.iter().filter(move |f| f.source == source)
    }
}

/// Runs the encoder in Eval mode over every triple. Batches are processed
/// concurrently on private model copies; results keep input order.
pub fn extract_features(model: &EncoderModel, data: &AlignedPatches, batch_size: usize) -> Result<Extraction> {
    let batch_size = batch_size.max(1);
    let starts: Vec<usize> = (0..data.len()).step_by(batch_size).collect();
    let chunks = par::map(&starts, |_, &s| -> Result<EncoderOutputRows> {
        let idx: Vec<usize> = (s..(s + batch_size).min(data.len())).collect();
        let x = data.batch_tensors(&idx)?;
        let mut m = model.clone();
        let out = m.forward([&x[0], &x[1], &x[2]], Mode::Eval)?;
        Ok(EncoderOutputRows {
            features: out.features.map(|t| t.into_data()),
            probs: out.logits.map(|l| softmax_rows(&l).into_data()),
        })
    });
    let classes = model.classes();
    let mut ext = Extraction {
        features: Vec::with_capacity(4 * data.len()),
        probs: Default::default(),
    };
    let mut i = 0;
    for chunk in chunks {
        let chunk = chunk?;
        let rows = chunk.features[0].len() / FEATURE_DIM;
        for r in 0..rows {
            for source in FeatureSource::ALL {
                let k = source.index();
                ext.features.push(HighLevelFeature {
                    key: data.keys[i + r].clone(),
                    source,
                    values: chunk.features[k][r * FEATURE_DIM..(r + 1) * FEATURE_DIM].to_vec(),
                    label: data.labels[i + r],
                    device_id: data.devices[i + r].clone(),
                });
                ext.probs[k].push(chunk.probs[k][r * classes..(r + 1) * classes].to_vec());
            }
        }
        i += rows;
    }
    Ok(ext)
}

struct EncoderOutputRows {
    features: [Vec<f32>; 4],
    probs: [Vec<f32>; 4],
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(seg: &str, index: usize, kind: SpectrogramKind) -> Patch {
        Patch {
            key: PatchKey {
                segment_id: seg.into(),
                index,
            },
            kind,
            label: Some(0),
            device_id: None,
            values: vec![0.0; PATCH_LEN],
        }
    }

    #[test]
    fn misaligned_lists_report_orphans() {
        let [lm, ga, cq] = SpectrogramKind::ALL;
        let err = AlignedPatches::align(
            vec![patch("a", 0, lm), patch("a", 1, lm)],
            vec![patch("a", 0, ga)],
            vec![patch("a", 0, cq), patch("b", 0, cq)],
        )
        .unwrap_err();
        match err {
            Error::Misaligned { orphans } => assert_eq!(orphans, vec!["a#1".to_string(), "b#0".to_string()]),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn aligned_order_follows_logmel() {
        let [lm, ga, cq] = SpectrogramKind::ALL;
        let a = AlignedPatches::align(
            vec![patch("b", 0, lm), patch("a", 0, lm)],
            vec![patch("a", 0, ga), patch("b", 0, ga)],
            vec![patch("a", 0, cq), patch("b", 0, cq)],
        )
        .unwrap();
        assert_eq!(a.keys[0].segment_id, "b");
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn loss_arithmetic() {
        let cfg = EncoderLossConfig::default();
        assert!((cfg.combine([0.9, 0.9, 0.9, 0.6]) - 1.5).abs() < 1e-6);
        let only_com = EncoderLossConfig { alpha: 0.0, beta: 1.0 };
        assert_eq!(only_com.combine([5.0, 6.0, 7.0, 0.6]), 0.6);
        let only_branch = EncoderLossConfig { alpha: 1.0 / 3.0, beta: 0.0 };
        assert!((only_branch.combine([0.8, 0.8, 0.8, 9.0]) - 0.8).abs() < 1e-6);
    }

    use alloc::string::ToString;
}
