//! Mixup augmentation.
//!
//! A [`MixupPlan`] lists, for every output item, which two inputs are mixed
//! and with which coefficient. Plans are cheap to build and are applied
//! lazily, so the encoder can mix the three spectrogram kinds of one patch
//! triple with the same partner and the same `lambda`.

use alloc::vec::Vec;
use alloc::{format, vec};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixupStage {
    /// Spectrogram patches: originals plus a beta copy and a Gaussian copy.
    Patch,
    /// High-level features: originals plus a beta copy.
    Feature,
}

/// How the mixing coefficient of one copy is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaDraw {
    Beta,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixupConfig {
    pub beta_alpha: f64,
    pub gaussian_mean: f64,
    pub gaussian_std: f64,
    pub seed: u64,
    pub stage: MixupStage,
    /// Patch stage only: when false the Gaussian copy is skipped (2x).
    pub gaussian_copy: bool,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            beta_alpha: 0.4,
            gaussian_mean: 0.5,
            gaussian_std: 0.15,
            seed: 0,
            stage: MixupStage::Patch,
            gaussian_copy: true,
        }
    }
}

impl MixupConfig {
    pub fn feature(seed: u64) -> Self {
        Self {
            seed,
            stage: MixupStage::Feature,
            ..Self::default()
        }
    }

    pub fn patch(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_alpha > 0.0) || !(self.gaussian_std > 0.0) || !self.gaussian_mean.is_finite() {
            return Err(Error::Config(format!(
                "mixup needs beta_alpha > 0 and gaussian_std > 0 (got {}, {})",
                self.beta_alpha, self.gaussian_std
            )));
        }
        Ok(())
    }

    /// The mixed copies appended after the originals.
    pub fn draws(&self) -> &'static [LambdaDraw] {
        match (self.stage, self.gaussian_copy) {
            (MixupStage::Patch, true) => &[LambdaDraw::Beta, LambdaDraw::Gaussian],
            _ => &[LambdaDraw::Beta],
        }
    }

    /// Output size relative to input size.
    pub fn multiplicity(&self) -> usize {
        1 + self.draws().len()
    }
}

/// One output item: `lambda * input[first] + (1 - lambda) * input[second]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixEntry {
    pub first: usize,
    pub second: usize,
    pub lambda: f32,
}

impl MixEntry {
    pub fn is_original(&self) -> bool {
        self.first == self.second && self.lambda == 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixupPlan {
    pub entries: Vec<MixEntry>,
    /// Set when the input had fewer than two items and no mixing happened.
    pub too_few: bool,
}

impl MixupPlan {
    /// Originals first, then one block per copy in [`MixupConfig::draws`]
    /// order. Each copy pairs item `i` with `perm[i]` for a fresh random
    /// derangement `perm`.
    pub fn new(n: usize, cfg: &MixupConfig) -> Result<Self> {
        cfg.validate()?;
        let mut entries: Vec<MixEntry> = (0..n)
            .map(|i| MixEntry {
                first: i,
                second: i,
                lambda: 1.0,
            })
            .collect();
        if n < 2 {
            return Ok(Self { entries, too_few: true });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let beta = Beta::new(cfg.beta_alpha, cfg.beta_alpha).map_err(|e| Error::Config(format!("{e}")))?;
        let normal = Normal::new(cfg.gaussian_mean, cfg.gaussian_std).map_err(|e| Error::Config(format!("{e}")))?;
        for draw in cfg.draws() {
            let perm = derangement(n, &mut rng);
            for (i, &j) in perm.iter().enumerate() {
                let lambda = match draw {
                    LambdaDraw::Beta => beta.sample(&mut rng),
                    LambdaDraw::Gaussian => normal.sample(&mut rng),
                };
                entries.push(MixEntry {
                    first: i,
                    second: j,
                    lambda: lambda.clamp(0.0, 1.0) as f32,
                });
            }
        }
        Ok(Self { entries, too_few: false })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Materializes every entry over `values` and `labels`.
    pub fn apply<V: AsRef<[f32]>, L: AsRef<[f32]>>(&self, values: &[V], labels: &[L]) -> Result<Augmented> {
        if values.len() != labels.len() {
            return Err(Error::shape("mixup values vs labels", &[values.len()], &[labels.len()]));
        }
        let mut out = Augmented {
            values: Vec::with_capacity(self.len()),
            labels: Vec::with_capacity(self.len()),
            too_few: self.too_few,
        };
        for e in &self.entries {
            let (x, y) = mixup_pair(
                values[e.first].as_ref(),
                values[e.second].as_ref(),
                labels[e.first].as_ref(),
                labels[e.second].as_ref(),
                e.lambda,
            )?;
            out.values.push(x);
            out.labels.push(y);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub values: Vec<Vec<f32>>,
    pub labels: Vec<Vec<f32>>,
    pub too_few: bool,
}

/// A uniformly random permutation without fixed points (`n >= 2`).
pub fn derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    if n < 2 {
        return perm;
    }
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return perm;
        }
    }
}

/// Writes `lambda * a + (1 - lambda) * b` into `out`.
pub fn mix_into(a: &[f32], b: &[f32], lambda: f32, out: &mut [f32]) {
    let mu = 1.0 - lambda;
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = lambda * x + mu * y;
    }
}

/// Convex combination of two samples and their soft labels.
pub fn mixup_pair(xi: &[f32], xj: &[f32], yi: &[f32], yj: &[f32], lambda: f32) -> Result<(Vec<f32>, Vec<f32>)> {
    if xi.len() != xj.len() {
        return Err(Error::shape("mixup inputs", &[xi.len()], &[xj.len()]));
    }
    if yi.len() != yj.len() {
        return Err(Error::shape("mixup labels", &[yi.len()], &[yj.len()]));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Invalid(format!("mixup lambda {lambda} outside [0, 1]")));
    }
    if lambda == 1.0 {
        return Ok((xi.to_vec(), yi.to_vec()));
    }
    let mut x = vec![0.0; xi.len()];
    let mut y = vec![0.0; yi.len()];
    mix_into(xi, xj, lambda, &mut x);
    mix_into(yi, yj, lambda, &mut y);
    Ok((x, y))
}

fn augment_stage<V: AsRef<[f32]>, L: AsRef<[f32]>>(
    values: &[V],
    labels: &[L],
    cfg: &MixupConfig,
    stage: MixupStage,
) -> Result<Augmented> {
    if cfg.stage != stage {
        return Err(Error::Config(format!("mixup config is for the {:?} stage", cfg.stage)));
    }
    MixupPlan::new(values.len(), cfg)?.apply(values, labels)
}

/// Originals, a beta-mixup copy and a Gaussian-mixup copy (3x).
pub fn augment_patch_set<V: AsRef<[f32]>, L: AsRef<[f32]>>(
    patches: &[V],
    labels: &[L],
    cfg: &MixupConfig,
) -> Result<Augmented> {
    augment_stage(patches, labels, cfg, MixupStage::Patch)
}

/// Originals and a beta-mixup copy (2x).
pub fn augment_feature_set<V: AsRef<[f32]>, L: AsRef<[f32]>>(
    features: &[V],
    labels: &[L],
    cfg: &MixupConfig,
) -> Result<Augmented> {
    augment_stage(features, labels, cfg, MixupStage::Feature)
}

/// One-hot row of length `classes`.
pub fn one_hot(class: usize, classes: usize) -> Vec<f32> {
    let mut v = vec![0.0; classes];
    v[class] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_examples() {
        let (x, y) = mixup_pair(&[1.0, 2.0], &[5.0, 6.0], &[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
        assert_eq!((x, y), (vec![1.0, 2.0], vec![1.0, 0.0]));
        let (_, y) = mixup_pair(&[0.0], &[0.0], &[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap();
        assert_eq!(y, vec![0.5, 0.5]);
        let (x, _) = mixup_pair(&[4.0; 3], &[0.0; 3], &[1.0], &[1.0], 0.25).unwrap();
        assert_eq!(x, vec![1.0; 3]);
        assert!(mixup_pair(&[1.0], &[1.0, 2.0], &[1.0], &[1.0], 0.5).is_err());
    }

    #[test]
    fn multiplicities() {
        let values: Vec<Vec<f32>> = (0..100).map(|i| vec![i as f32; 4]).collect();
        let labels: Vec<Vec<f32>> = (0..100).map(|i| one_hot(i % 3, 3)).collect();
        let out = augment_patch_set(&values, &labels, &MixupConfig::patch(7)).unwrap();
        assert_eq!(out.values.len(), 300);
        let out = augment_feature_set(&values, &labels, &MixupConfig::feature(7)).unwrap();
        assert_eq!(out.values.len(), 200);
        assert!(augment_feature_set(&values, &labels, &MixupConfig::patch(7)).is_err());
    }

    #[test]
    fn single_item_warns() {
        let out = augment_patch_set(&[vec![1.0f32]], &[vec![1.0f32]], &MixupConfig::patch(1)).unwrap();
        assert!(out.too_few);
        assert_eq!(out.values, vec![vec![1.0]]);
    }

    #[test]
    fn derangement_has_no_fixed_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..40 {
            let p = derangement(n, &mut rng);
            assert!(p.iter().enumerate().all(|(i, &j)| i != j));
            let mut s = p.clone();
            s.sort_unstable();
            assert_eq!(s, (0..n).collect::<Vec<_>>());
        }
    }
}
