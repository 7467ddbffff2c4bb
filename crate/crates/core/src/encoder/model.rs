use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::format;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cnn::{dnn2_specs, head_specs, CnnConfig};
use super::combiner::{Combiner, CombinerKind, LIN_PARAM_NAMES};
use crate::nn::{load_param, save_param, Mode, Param, Sequential, StateDict, Tensor};
use crate::{par, Error, Result, FEATURE_DIM, PATCH_SIZE};

/// Where a high-level feature comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureSource {
    LogMel,
    Gamma,
    Cqt,
    Combined,
}

impl FeatureSource {
    pub const ALL: [FeatureSource; 4] = [
        FeatureSource::LogMel,
        FeatureSource::Gamma,
        FeatureSource::Cqt,
        FeatureSource::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSource::LogMel => "LM",
            FeatureSource::Gamma => "GA",
            FeatureSource::Cqt => "CQ",
            FeatureSource::Combined => "COM",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LM" | "LOGMEL" => Ok(FeatureSource::LogMel),
            "GA" | "GAMMA" => Ok(FeatureSource::Gamma),
            "CQ" | "CQT" => Ok(FeatureSource::Cqt),
            "COM" | "COMBINED" => Ok(FeatureSource::Combined),
            other => Err(Error::Config(format!("unknown feature source '{other}'"))),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

const BRANCH_PREFIX: [&str; 3] = ["lm", "ga", "cq"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub classes: usize,
    pub cnn: CnnConfig,
    pub combiner: CombinerKind,
    pub dnn2_dropout: f32,
    /// Seeds weight initialisation and the dropout streams.
    pub seed: u64,
}

impl EncoderConfig {
    pub fn new(classes: usize, combiner: CombinerKind) -> Self {
        Self {
            classes,
            cnn: CnnConfig::full(),
            combiner,
            dnn2_dropout: 0.3,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if !(0.0..1.0).contains(&self.dnn2_dropout) {
            return Err(Error::Config(format!("dnn2 dropout {} outside [0, 1)", self.dnn2_dropout)));
        }
        self.cnn.validate()
    }

    /// One-line `key=value` architecture description.
    pub fn descriptor(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let drops = self.cnn.dropout.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        format!(
            "encoder classes={} channels={} kernels={} dropout={} combiner={} dnn2_dropout={} seed={}",
            self.classes,
            list(&self.cnn.channels),
            list(&self.cnn.kernels),
            drops,
            self.combiner.name(),
            self.dnn2_dropout,
            self.seed
        )
    }

    pub fn from_descriptor(s: &str) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("encoder descriptor: bad {what} in '{s}'"));
        let mut words = s.split_whitespace();
        if words.next() != Some("encoder") {
            return Err(bad("kind"));
        }
        let mut cfg = Self::new(2, CombinerKind::Sum);
        fn six<T: core::str::FromStr + Copy + Default>(v: &str) -> Option<[T; 6]> {
            let items: Vec<T> = v.split(',').map(|x| x.parse().ok()).collect::<Option<_>>()?;
            items.try_into().ok()
        }
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| bad(w))?;
            match k {
                "classes" => cfg.classes = v.parse().map_err(|_| bad(k))?,
                "channels" => cfg.cnn.channels = six(v).ok_or_else(|| bad(k))?,
                "kernels" => cfg.cnn.kernels = six(v).ok_or_else(|| bad(k))?,
                "dropout" => cfg.cnn.dropout = six(v).ok_or_else(|| bad(k))?,
                "combiner" => cfg.combiner = CombinerKind::parse(v)?,
                "dnn2_dropout" => cfg.dnn2_dropout = v.parse().map_err(|_| bad(k))?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad(k))?,
                _ => return Err(bad(k)),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One spectrogram path: CNN feature extractor and its dense head.
#[derive(Debug, Clone)]
pub struct Branch {
    pub cnn: Sequential,
    pub head: Sequential,
}

impl Branch {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, Tensor)> {
        let feat = self.cnn.forward(x, mode)?;
        let logits = self.head.forward(&feat, mode)?;
        Ok((feat, logits))
    }

    fn backward(&mut self, dlogits: &Tensor, dfeat_extra: &Tensor) -> Result<()> {
        let mut dfeat = self.head.backward(dlogits)?;
        for (d, e) in dfeat.data_mut().iter_mut().zip(dfeat_extra.data()) {
            *d += e;
        }
        self.cnn.backward(&dfeat)?;
        Ok(())
    }
}

/// Outputs of one forward pass, indexed by [`FeatureSource`].
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub logits: [Tensor; 4],
    pub features: [Tensor; 4],
}

/// Three CNN branches with dense heads, a combiner and the combined-path
/// classifier.
#[derive(Debug, Clone)]
pub struct EncoderModel {
    config: EncoderConfig,
    pub branches: [Branch; 3],
    pub combiner: Combiner,
    pub dnn2: Sequential,
}

impl EncoderModel {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let specs = config.cnn.specs();
        let mut branch = || -> Result<Branch> {
            let mut cnn = Sequential::new(&[1, PATCH_SIZE, PATCH_SIZE], &specs, &mut rng)?;
            cnn.set_input_grad(false);
            let head = Sequential::new(&[FEATURE_DIM], &head_specs(config.classes), &mut rng)?;
            Ok(Branch { cnn, head })
        };
        let branches = [branch()?, branch()?, branch()?];
        let dnn2 = Sequential::new(&[FEATURE_DIM], &dnn2_specs(config.classes, config.dnn2_dropout), &mut rng)?;
        Ok(Self {
            config,
            branches,
            combiner: Combiner::new(config.combiner, FEATURE_DIM),
            dnn2,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    /// Runs the three branches (concurrently with the `parallel` feature),
    /// then the combiner and the combined head. Inputs are
    /// `[N, 1, 128, 128]` patches of the same time windows.
    pub fn forward(&mut self, patches: [&Tensor; 3], mode: Mode) -> Result<EncoderOutput> {
        let n = patches[0].batch();
        for p in patches {
            if p.shape() != [n, 1, PATCH_SIZE, PATCH_SIZE] {
                return Err(Error::shape("encoder patch batch", &[n, 1, PATCH_SIZE, PATCH_SIZE], p.shape()));
            }
        }
        let [b0, b1, b2] = &mut self.branches;
        let (r0, r1, r2) = par::join3(
            || b0.forward(patches[0], mode),
            || b1.forward(patches[1], mode),
            || b2.forward(patches[2], mode),
        );
        let ((f0, l0), (f1, l1), (f2, l2)) = (r0?, r1?, r2?);
        let combined = self.combiner.forward([&f0, &f1, &f2])?;
        let l3 = self.dnn2.forward(&combined, mode)?;
        Ok(EncoderOutput {
            logits: [l0, l1, l2, l3],
            features: [f0, f1, f2, combined],
        })
    }

    /// Backpropagates logit gradients of all four heads. Parameter
    /// gradients accumulate until [`EncoderModel::zero_grad`].
    pub fn backward(&mut self, dlogits: &[Tensor; 4]) -> Result<()> {
        let dcomb = self.dnn2.backward(&dlogits[3])?;
        let [d0, d1, d2] = self.combiner.backward(&dcomb)?;
        let [b0, b1, b2] = &mut self.branches;
        let (r0, r1, r2) = par::join3(
            || b0.backward(&dlogits[0], &d0),
            || b1.backward(&dlogits[1], &d1),
            || b2.backward(&dlogits[2], &d2),
        );
        r0?;
        r1?;
        r2?;
        Ok(())
    }

    /// Every trainable parameter in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for b in &mut self.branches {
            out.extend(b.cnn.params_mut());
            out.extend(b.head.params_mut());
        }
        out.extend(self.combiner.params_mut());
        out.extend(self.dnn2.params_mut());
        out
    }

    pub fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (b, prefix) in self.branches.iter().zip(BRANCH_PREFIX) {
            out.extend(b.cnn.named_params(&format!("{prefix}.cnn.")));
            out.extend(b.head.named_params(&format!("{prefix}.head.")));
        }
        out.extend(self.combiner.named_params("combiner."));
        out.extend(self.dnn2.named_params("dnn2."));
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.value.len()).sum()
    }

    /// `||theta||^2` over all trainable parameters.
    pub fn sum_sq(&self) -> f64 {
        self.named_params().iter().map(|(_, p)| p.value.sum_sq()).sum()
    }

    pub fn save_state(&self) -> Result<StateDict> {
        let mut dict = StateDict::new();
        for (b, prefix) in self.branches.iter().zip(BRANCH_PREFIX) {
            b.cnn.save_state(&format!("{prefix}.cnn."), &mut dict)?;
            b.head.save_state(&format!("{prefix}.head."), &mut dict)?;
        }
        for (name, p) in self.combiner.named_params("combiner.") {
            save_param(&mut dict, name, p)?;
        }
        self.dnn2.save_state("dnn2.", &mut dict)?;
        Ok(dict)
    }

    /// Rebuilds a model from its configuration and saved tensors.
    pub fn from_state(config: EncoderConfig, dict: &StateDict) -> Result<Self> {
        let mut model = Self::new(config)?;
        for (b, prefix) in model.branches.iter_mut().zip(BRANCH_PREFIX) {
            b.cnn.load_state(&format!("{prefix}.cnn."), dict)?;
            b.head.load_state(&format!("{prefix}.head."), dict)?;
        }
        for (name, p) in LIN_PARAM_NAMES.iter().zip(model.combiner.params_mut()) {
            load_param(dict, &format!("combiner.{name}"), p)?;
        }
        model.dnn2.load_state("dnn2.", dict)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(combiner: CombinerKind) -> EncoderConfig {
        let mut cfg = EncoderConfig::new(3, combiner);
        cfg.cnn.channels = [2, 2, 2, 2, 2, FEATURE_DIM];
        cfg
    }

    #[test]
    fn descriptor_round_trip() {
        let mut cfg = tiny(CombinerKind::Lin);
        cfg.seed = 42;
        assert_eq!(EncoderConfig::from_descriptor(&cfg.descriptor()).unwrap(), cfg);
        assert!(EncoderConfig::from_descriptor("decoder classes=3").is_err());
    }

    #[test]
    fn forward_shapes() {
        let mut model = EncoderModel::new(tiny(CombinerKind::Max)).unwrap();
        let x = Tensor::filled(&[2, 1, 128, 128], 0.1);
        let out = model.forward([&x, &x, &x], Mode::Eval).unwrap();
        for f in &out.features {
            assert_eq!(f.shape(), &[2, FEATURE_DIM]);
        }
        for l in &out.logits {
            assert_eq!(l.shape(), &[2, 3]);
        }
        let bad = Tensor::filled(&[2, 1, 64, 128], 0.1);
        assert!(model.forward([&x, &bad, &x], Mode::Eval).is_err());
    }

    #[test]
    fn branches_hold_different_weights() {
        let model = EncoderModel::new(tiny(CombinerKind::Sum)).unwrap();
        let w = |b: usize| model.branches[b].cnn.named_params("")[2].1.value.data().to_vec();
        assert_ne!(w(0), w(1));
        assert_ne!(w(1), w(2));
    }

    #[test]
    fn state_round_trip() {
        let model = EncoderModel::new(tiny(CombinerKind::Lin)).unwrap();
        let dict = model.save_state().unwrap();
        let mut cfg = *model.config();
        cfg.seed = 99;
        let loaded = EncoderModel::from_state(cfg, &dict).unwrap();
        assert_eq!(loaded.save_state().unwrap(), dict);
    }
}
