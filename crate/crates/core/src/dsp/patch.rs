use alloc::string::String;
use alloc::vec::Vec;

use super::{Spectrogram, SpectrogramKind};
use crate::{Error, Result, PATCH_SIZE};

/// Identifies a patch within the dataset, independent of spectrogram kind.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatchKey {
    pub segment_id: String,
    pub index: usize,
}

/// A 128x128 tile, frame-major (`values[t * 128 + f]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub key: PatchKey,
    pub kind: SpectrogramKind,
    pub label: Option<usize>,
    pub device_id: Option<String>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatchSet {
    pub patches: Vec<Patch>,
    /// Frames left over after the last full patch.
    pub dropped_frames: usize,
    /// Set when the spectrogram was shorter than one patch.
    pub too_short: bool,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Cuts consecutive, non-overlapping 128-frame patches; trailing frames that
/// do not fill a patch are discarded.
pub fn split_patches(spec: &Spectrogram) -> Result<PatchSet> {
    if spec.bins != PATCH_SIZE {
        return Err(Error::shape("split_patches bins", &[PATCH_SIZE], &[spec.bins]));
    }
    let count = spec.frames / PATCH_SIZE;
    let stride = PATCH_SIZE * PATCH_SIZE;
    let patches = (0..count)
        .map(|i| Patch {
            key: PatchKey {
                segment_id: spec.source_id.clone(),
                index: i,
            },
            kind: spec.kind,
            label: spec.label,
            device_id: spec.device_id.clone(),
            values: spec.values[i * stride..(i + 1) * stride].to_vec(),
        })
        .collect();
    Ok(PatchSet {
        patches,
        dropped_frames: spec.frames - count * PATCH_SIZE,
        too_short: count == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SpectrogramConfig;
    use alloc::vec;

    fn spec_with_frames(frames: usize) -> Spectrogram {
        Spectrogram {
            kind: SpectrogramKind::LogMel,
            frames,
            bins: 128,
            values: (0..frames * 128).map(|i| i as f32).collect(),
            config: SpectrogramConfig::default(),
            sample_rate: 16_000,
            source_id: "seg".into(),
            device_id: None,
            label: Some(1),
        }
    }

    #[test]
    fn exact_division() {
        let set = split_patches(&spec_with_frames(256)).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.dropped_frames, 0);
        assert!(!set.too_short);
    }

    #[test]
    fn remainder_dropped() {
        let spec = spec_with_frames(300);
        let set = split_patches(&spec).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.dropped_frames, 44);
        // patch 1 starts at frame 128
        assert_eq!(set.patches[1].values[0], (128 * 128) as f32);
        assert_eq!(set.patches[1].key.index, 1);
    }

    #[test]
    fn short_input_flagged_not_error() {
        let set = split_patches(&spec_with_frames(100)).unwrap();
        assert!(set.is_empty());
        assert!(set.too_short);
    }

    #[test]
    fn wrong_bin_count_rejected() {
        let mut spec = spec_with_frames(128);
        spec.bins = 64;
        spec.values = vec![0.0; 128 * 64];
        assert!(split_patches(&spec).is_err());
    }
}
