//! Audio in, scene label out: front-end, encoder and an optional decoder
//! wired together for inference and evaluation.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::decoders::DecoderModel;
use crate::dsp::{split_patches, AudioSegment, Frontend, Patch, ZScore};
use crate::encoder::{extract_features, AlignedPatches, EncoderModel, FeatureSource};
use crate::eval::{evaluate, group_by_segment, Aggregation, EvaluationReport, PatchOrigin, SegmentPrediction};
use crate::{par, Error, Result, PATCH_SIZE};

#[derive(Debug, Clone)]
pub struct ModelStack {
    pub frontend: Frontend,
    /// Per-kind statistics applied after extraction, in
    /// [`SpectrogramKind::ALL`](crate::dsp::SpectrogramKind::ALL) order.
    pub normalizers: Option<[ZScore; 3]>,
    pub encoder: EncoderModel,
    /// Without a decoder the encoder head of `source` gives the scores.
    pub decoder: Option<DecoderModel>,
    pub source: FeatureSource,
    pub aggregation: Aggregation,
    pub batch_size: usize,
}

impl ModelStack {
    pub fn new(frontend: Frontend, encoder: EncoderModel, source: FeatureSource) -> Self {
        Self {
            frontend,
            normalizers: None,
            encoder,
            decoder: None,
            source,
            aggregation: Aggregation::Mean,
            batch_size: 64,
        }
    }

    pub fn with_decoder(mut self, decoder: DecoderModel) -> Self {
        self.decoder = Some(decoder);
        self
    }

    pub fn classes(&self) -> usize {
        self.encoder.classes()
    }

    /// Aligned patch triples of one segment, `None` when it is too short
    /// to fill a single patch.
    pub fn segment_patches(&self, audio: &AudioSegment) -> Result<Option<AlignedPatches>> {
        segment_patches(&self.frontend, self.normalizers.as_ref(), audio)
    }

    /// Class scores for every triple.
    pub fn patch_scores(&self, data: &AlignedPatches) -> Result<Vec<Vec<f32>>> {
        let mut ext = extract_features(&self.encoder, data, self.batch_size)?;
        match &self.decoder {
            None => Ok(core::mem::take(&mut ext.probs[self.source.index()])),
            Some(d) => {
                let feats: Vec<Vec<f32>> = ext.of_source(self.source).map(|f| f.values.clone()).collect();
                d.predict(&feats)
            }
        }
    }

    /// One prediction per segment, in order of first appearance.
    pub fn predict_patches(&self, data: &AlignedPatches) -> Result<Vec<SegmentPrediction>> {
        let scores = self.patch_scores(data)?;
        let origins: Vec<PatchOrigin<'_>> = data
            .keys
            .iter()
            .zip(&data.labels)
            .zip(&data.devices)
            .map(|((k, &label), d)| PatchOrigin {
                segment_id: k.segment_id.as_str(),
                label,
                device_id: d.as_deref(),
            })
            .collect();
        group_by_segment(&origins, &scores, self.aggregation)
    }

    /// Predictions for whole segments; `None` for segments without patches.
    pub fn predict_segments(&self, segments: &[AudioSegment]) -> Result<Vec<Option<SegmentPrediction>>> {
        let patches: Vec<Option<AlignedPatches>> = par::map(segments, |_, s| self.segment_patches(s))
            .into_iter()
            .collect::<Result<_>>()?;
        let mut all = AlignedPatches::default();
        for p in patches.iter().flatten() {
            all.extend(p.clone());
        }
        let mut preds = if all.is_empty() {
            Vec::new()
        } else {
            self.predict_patches(&all)?
        }
        .into_iter();
        Ok(patches
            .iter()
            .map(|p| p.as_ref().and_then(|_| preds.next()))
            .collect())
    }

    pub fn predict_segment(&self, audio: &AudioSegment) -> Result<Option<SegmentPrediction>> {
        Ok(self.predict_segments(core::slice::from_ref(audio))?.pop().flatten())
    }

    /// Full-length evaluation; every segment must yield at least one patch.
    pub fn evaluate_segments(&self, segments: &[AudioSegment]) -> Result<EvaluationReport> {
        let preds = self.predict_segments(segments)?;
        let preds = preds
            .into_iter()
            .zip(segments)
            .map(|(p, s)| p.ok_or_else(|| Error::TooShort {
                len: s.len(),
                needed: self.min_samples(),
            }))
            .collect::<Result<Vec<_>>>()?;
        evaluate(&preds, self.classes())
    }

    /// Fewest samples that fill one patch.
    pub fn min_samples(&self) -> usize {
        let cfg = self.frontend.config();
        let sr = self.frontend.sample_rate();
        cfg.frame_len(sr) + (PATCH_SIZE - 1) * cfg.hop_len(sr)
    }
}

/// Aligned patch triples of one segment, optionally normalized; `None`
/// when the segment is too short to fill a single patch.
pub fn segment_patches(
    frontend: &Frontend,
    normalizers: Option<&[ZScore; 3]>,
    audio: &AudioSegment,
) -> Result<Option<AlignedPatches>> {
    let frames = frontend
        .config()
        .frame_count(audio.len(), frontend.sample_rate())
        .unwrap_or(0);
    if frames < PATCH_SIZE {
        return Ok(None);
    }
    let mut specs = frontend.compute_all(audio)?;
    if let Some(z) = normalizers {
        for (s, z) in specs.iter_mut().zip(z) {
            z.apply(&mut s.values);
        }
    }
    let [lm, ga, cq] = specs;
    let cut = |s| split_patches(&s).map(|p| p.patches);
    let lists: [Vec<Patch>; 3] = [cut(lm)?, cut(ga)?, cut(cq)?];
    let [lm, ga, cq] = lists;
    AlignedPatches::align(lm, ga, cq).map(Some)
}

/// Accuracy on the first `k` seconds of every segment, spectrograms
/// recomputed on the cropped audio. A crop length is undefined (`None`) when
/// any segment yields no patch at that length.
pub fn early_classification_curve(
    stack: &ModelStack,
    segments: &[AudioSegment],
    crops: &[f64],
) -> Result<Vec<(f64, Option<f64>)>> {
    if segments.is_empty() {
        return Err(Error::Empty("no segments for the early-classification curve".into()));
    }
    let mut out = vec![];
    for &k in crops {
        let cropped = segments.iter().map(|s| s.crop(k)).collect::<Result<Vec<_>>>()?;
        let preds = stack.predict_segments(&cropped)?;
        let point = match preds.into_iter().collect::<Option<Vec<_>>>() {
            Some(p) => Some(evaluate(&p, stack.classes())?.overall),
            None => None,
        };
        out.push((k, point));
    }
    Ok(out)
}

/// Crop lengths from one second up to `full` in whole seconds, `full` last.
pub fn default_crops(full: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (1..).map(|s| s as f64).take_while(|&s| s < full).collect();
    v.push(full);
    v
}

impl ModelStack {
    pub fn describe(&self) -> String {
        format!(
            "source={} decoder={} aggregation={}",
            self.source.name(),
            self.decoder.as_ref().map_or("none", |d| d.kind().name()),
            self.aggregation.name()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SpectrogramConfig;
    use crate::encoder::{CnnConfig, CombinerKind, EncoderConfig};

    fn tiny_stack() -> ModelStack {
        let mut cfg = EncoderConfig::new(2, CombinerKind::Sum);
        cfg.cnn = CnnConfig::compact();
        let frontend = Frontend::new(SpectrogramConfig::default(), 16_000).unwrap();
        ModelStack::new(frontend, EncoderModel::new(cfg).unwrap(), FeatureSource::Combined)
    }

    fn noise(seconds: f64, id: &str, label: usize) -> AudioSegment {
        let n = (seconds * 16_000.0) as usize;
        let mut x = 0x1234_5678u32 ^ label as u32;
        let samples = (0..n)
            .map(|_| {
                x ^= x << 13;
                x ^= x >> 17;
                x ^= x << 5;
                (x as f32 / u32::MAX as f32 - 0.5) * 0.2
            })
            .collect();
        AudioSegment::new(samples, 16_000, id).unwrap().with_label(label)
    }

    #[test]
    fn patch_counts_follow_frame_arithmetic() {
        let stack = tiny_stack();
        assert_eq!(stack.segment_patches(&noise(2.0, "a", 0)).unwrap().unwrap().len(), 2);
        assert!(stack.segment_patches(&noise(0.5, "a", 0)).unwrap().is_none());
        let min = stack.min_samples();
        let at = AudioSegment::new(vec![0.1; min], 16_000, "m").unwrap();
        let below = AudioSegment::new(vec![0.1; min - 1], 16_000, "m").unwrap();
        assert!(stack.segment_patches(&at).unwrap().is_some());
        assert!(stack.segment_patches(&below).unwrap().is_none());
    }

    #[test]
    fn full_crop_matches_evaluation() {
        let stack = tiny_stack();
        let segs = [noise(2.5, "a", 0), noise(2.5, "b", 1)];
        let report = stack.evaluate_segments(&segs).unwrap();
        let curve = early_classification_curve(&stack, &segs, &[0.5, 1.0, 2.5]).unwrap();
        assert_eq!(curve[0], (0.5, None));
        assert!(curve[1].1.is_some());
        assert_eq!(curve[2], (2.5, Some(report.overall)));
        assert!(early_classification_curve(&stack, &segs, &[3.0]).is_err());
    }

    #[test]
    fn crop_grid() {
        assert_eq!(default_crops(10.0), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        assert_eq!(default_crops(2.5), vec![1.0, 2.0, 2.5]);
    }
}
