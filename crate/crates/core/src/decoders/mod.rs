//! Back-end classifiers over 256-d high-level features.
//!
//! All three kinds share [`DecoderModel::train`] and
//! [`DecoderModel::predict`], so any feature source can feed any decoder.

mod moe;
mod neural;
mod rfr;

use alloc::string::String;
use alloc::vec::Vec;
use alloc::format;

pub use moe::{gate_experts, MoeLayer};
pub use neural::{dnn3_specs, moe_trunk_specs, train_neural, NeuralNet, NeuralTrainConfig, HIDDEN};
pub use rfr::{RegressionTree, RfrConfig, RfrModel, LEAF};

use crate::augment::augment_feature_set;
use crate::nn::StateDict;
use crate::{Error, Result, FEATURE_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DecoderKind {
    Rfr,
    Dnn,
    Moe,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 3] = [DecoderKind::Rfr, DecoderKind::Dnn, DecoderKind::Moe];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Rfr => "rfr",
            DecoderKind::Dnn => "dnn-03",
            DecoderKind::Moe => "moe",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rfr" | "forest" => Ok(DecoderKind::Rfr),
            "dnn" | "dnn-03" | "dnn03" | "dnn3" => Ok(DecoderKind::Dnn),
            "moe" => Ok(DecoderKind::Moe),
            other => Err(Error::Config(format!("unknown decoder '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub kind: DecoderKind,
    pub classes: usize,
    pub experts: usize,
    pub dropout: f32,
    pub forest: RfrConfig,
    /// Neural kinds only; its mixup also drives the forest's augmentation.
    pub train: NeuralTrainConfig,
    /// Weight initialisation and dropout streams.
    pub seed: u64,
}

impl DecoderConfig {
    pub fn new(kind: DecoderKind, classes: usize) -> Self {
        Self {
            kind,
            classes,
            experts: 10,
            dropout: 0.3,
            forest: RfrConfig::default(),
            train: NeuralTrainConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.experts == 0 {
            return Err(Error::Config("mixture needs at least one expert".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("decoder dropout {} outside [0, 1)", self.dropout)));
        }
        self.forest.validate()?;
        self.train.mixup.validate()
    }

    /// Architecture line stored with checkpoints.
    pub fn descriptor(&self) -> String {
        format!(
            "decoder kind={} classes={} experts={} dropout={} seed={}",
            self.kind.name(),
            self.classes,
            self.experts,
            self.dropout,
            self.seed
        )
    }

    /// Restores the architecture fields of [`DecoderConfig::descriptor`].
    pub fn from_descriptor(s: &str) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("decoder descriptor: bad {what} in '{s}'"));
        let mut words = s.split_whitespace();
        if words.next() != Some("decoder") {
            return Err(bad("kind"));
        }
        let mut cfg = Self::new(DecoderKind::Dnn, 2);
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| bad(w))?;
            match k {
                "kind" => cfg.kind = DecoderKind::parse(v)?,
                "classes" => cfg.classes = v.parse().map_err(|_| bad(k))?,
                "experts" => cfg.experts = v.parse().map_err(|_| bad(k))?,
                "dropout" => cfg.dropout = v.parse().map_err(|_| bad(k))?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad(k))?,
                _ => return Err(bad(k)),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub enum DecoderModel {
    Rfr(RfrModel),
    Neural { config: DecoderConfig, net: NeuralNet },
}

/// Per-epoch training loss of the neural kinds; empty for the forest.
pub type DecoderLog = Vec<f64>;

impl DecoderModel {
    fn build(config: &DecoderConfig) -> Result<NeuralNet> {
        match config.kind {
            DecoderKind::Dnn => NeuralNet::dnn(config.classes, config.dropout, config.seed),
            DecoderKind::Moe => NeuralNet::moe(config.classes, config.experts, config.dropout, config.seed),
            DecoderKind::Rfr => Err(Error::Config("the forest has no network".into())),
        }
    }

    /// Trains on features with soft labels. Neural kinds mix features every
    /// epoch; the forest is fitted once on a doubled, mixed set.
    pub fn train(
        config: &DecoderConfig,
        features: &[Vec<f32>],
        labels: &[Vec<f32>],
        on_epoch: impl FnMut(usize, f64),
    ) -> Result<(Self, DecoderLog)> {
        config.validate()?;
        if features.is_empty() {
            return Err(Error::Empty("decoder training set".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::shape("decoder features vs labels", &[features.len()], &[labels.len()]));
        }
        if let Some(f) = features.iter().find(|f| f.len() != FEATURE_DIM) {
            return Err(Error::shape("decoder feature", &[FEATURE_DIM], &[f.len()]));
        }
        if let Some(l) = labels.iter().find(|l| l.len() != config.classes) {
            return Err(Error::shape("decoder label", &[config.classes], &[l.len()]));
        }
        match config.kind {
            DecoderKind::Rfr => {
                let aug = augment_feature_set(features, labels, &config.train.mixup)?;
                let mut forest = config.forest;
                forest.seed = config.seed;
                Ok((DecoderModel::Rfr(RfrModel::fit(&aug.values, &aug.labels, &forest)?), Vec::new()))
            }
            _ => {
                let mut net = Self::build(config)?;
                let log = train_neural(&mut net, features, labels, &config.train, on_epoch)?;
                Ok((DecoderModel::Neural { config: *config, net }, log))
            }
        }
    }

    pub fn kind(&self) -> DecoderKind {
        match self {
            DecoderModel::Rfr(_) => DecoderKind::Rfr,
            DecoderModel::Neural { config, .. } => config.kind,
        }
    }

    /// Class scores per feature row. Neural kinds return softmax
    /// probabilities; the forest returns mean leaf vectors.
    pub fn predict(&self, features: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
        if let Some(f) = features.iter().find(|f| f.len() != FEATURE_DIM) {
            return Err(Error::shape("decoder feature", &[FEATURE_DIM], &[f.len()]));
        }
        match self {
            DecoderModel::Rfr(m) => features.iter().map(|f| m.predict(f)).collect(),
            DecoderModel::Neural { net, .. } => net.predict(features, 256),
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            DecoderModel::Rfr(m) => format!("decoder kind=rfr classes={} trees={}", m.outputs, m.trees.len()),
            DecoderModel::Neural { config, .. } => config.descriptor(),
        }
    }

    pub fn save_state(&self) -> Result<StateDict> {
        let mut dict = StateDict::new();
        match self {
            DecoderModel::Rfr(m) => m.save_state(&mut dict)?,
            DecoderModel::Neural { net, .. } => net.save_state(&mut dict)?,
        }
        Ok(dict)
    }

    pub fn from_state(descriptor: &str, dict: &StateDict) -> Result<Self> {
        if descriptor.split_whitespace().nth(1) == Some("kind=rfr") {
            return Ok(DecoderModel::Rfr(RfrModel::from_state(dict)?));
        }
        let config = DecoderConfig::from_descriptor(descriptor)?;
        let mut net = Self::build(&config)?;
        net.load_state(dict)?;
        Ok(DecoderModel::Neural { config, net })
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f32]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::one_hot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn separable(n: usize, classes: usize, seed: u64) -> (Vec<Vec<f32>>, Vec<Vec<f32>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % classes;
            let f: Vec<f32> = (0..FEATURE_DIM)
                .map(|d| if d % classes == c { 1.0 } else { 0.0 } + rng.random_range(-0.3..0.3))
                .collect();
            x.push(f);
            y.push(one_hot(c, classes));
        }
        (x, y)
    }

    fn quick(kind: DecoderKind) -> DecoderConfig {
        let mut cfg = DecoderConfig::new(kind, 3);
        cfg.train.epochs = 5;
        cfg.train.adam.lr = 1e-3;
        cfg.forest.n_trees = 10;
        cfg
    }

    #[test]
    fn every_kind_learns_separable_features() {
        let (x, y) = separable(150, 3, 1);
        let (tx, ty) = separable(60, 3, 2);
        for kind in DecoderKind::ALL {
            let (model, log) = DecoderModel::train(&quick(kind), &x, &y, |_, _| {}).unwrap();
            let pred = model.predict(&tx).unwrap();
            let correct = pred.iter().zip(&ty).filter(|(p, t)| argmax(p) == argmax(t)).count();
            assert!(correct >= 57, "{kind:?}: {correct}/60");
            if kind != DecoderKind::Rfr {
                assert!(log.windows(2).all(|w| w[1] < w[0]), "{kind:?} loss {log:?}");
            }
        }
    }

    #[test]
    fn descriptor_round_trip() {
        let cfg = DecoderConfig {
            experts: 7,
            seed: 3,
            ..DecoderConfig::new(DecoderKind::Moe, 6)
        };
        let back = DecoderConfig::from_descriptor(&cfg.descriptor()).unwrap();
        assert_eq!((back.kind, back.classes, back.experts, back.seed), (cfg.kind, 6, 7, 3));
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }
}
