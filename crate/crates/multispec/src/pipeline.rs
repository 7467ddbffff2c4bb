//! The experiment steps behind each CLI command. Every step reads and
//! writes fixed file names inside the output directory, so steps can run
//! separately and be repeated.

use std::fs;
use std::path::{Path, PathBuf};

use multispec_core::augment::{one_hot, MixupConfig, MixupStage};
use multispec_core::decoders::{argmax, DecoderConfig, DecoderKind, DecoderModel, NeuralTrainConfig, RfrConfig};
use multispec_core::dsp::{AudioSegment, Frontend, SpectrogramConfig, ZScore};
use multispec_core::encoder::{
    extract_features, train_encoder, AlignedPatches, CnnConfig, CombinerKind, EncoderConfig, EncoderLossConfig,
    EncoderModel, EncoderTrainConfig, EpochLog, FeatureSource,
};
use multispec_core::eval::{group_by_segment, Aggregation, EvaluationReport, PatchOrigin};
use multispec_core::nn::{AdamConfig, LossConfig};
use multispec_core::stack::{early_classification_curve, segment_patches, ModelStack};
use multispec_core::synth::{class_names, generate, SynthConfig};
use rayon::prelude::*;

use crate::ascf::{load_features, save_features, FeatureRecord};
use crate::checkpoint::{decoder_checkpoint, encoder_checkpoint, restore_decoder, restore_encoder, Checkpoint, FrontendInfo};
use crate::config::ExperimentConfig;
use crate::manifest::{load_manifest, write_manifest, Manifest, ManifestEntry, Split};
use crate::patches::{load_patches, save_patches, PatchFile};
use crate::report;
use crate::wav::{read_audio, write_wav};
use crate::{Error, Result};

pub const ENCODER_FILE: &str = "encoder.ck";
pub const DECODER_FILE: &str = "decoder.ck";

pub fn patches_path(out: &Path, split: Split) -> PathBuf {
    out.join(format!("patches_{split}.ascp"))
}

pub fn features_path(out: &Path, split: Split, source: FeatureSource) -> PathBuf {
    out.join(format!("features_{split}_{}.ascf", source.name()))
}

fn seed_for(cfg: &ExperimentConfig, stream: u64) -> u64 {
    cfg.seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Writes `<command>.config.ini` beside the outputs.
pub fn write_snapshot(cfg: &ExperimentConfig, command: &str) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(Error::io(&cfg.out))?;
    let p = cfg.out.join(format!("{command}.config.ini"));
    fs::write(&p, cfg.render()).map_err(Error::io(&p))
}

/// Settings that depart from the published architecture.
pub fn deviation_flags(cfg: &ExperimentConfig) -> Vec<String> {
    let mut f = Vec::new();
    if cfg.encoder.channels != CnnConfig::full().channels {
        f.push(format!("narrow-cnn {:?}", cfg.encoder.channels));
    }
    if cfg.encoder.epochs < 200 {
        f.push(format!("short-encoder-training {}", cfg.encoder.epochs));
    }
    if cfg.decoder.kind != DecoderKind::Rfr && cfg.decoder.epochs < 200 {
        f.push(format!("short-decoder-training {}", cfg.decoder.epochs));
    }
    if cfg.encoder.lr != 1e-4 || cfg.decoder.lr != 1e-4 {
        f.push(format!("learning-rate {} / {}", cfg.encoder.lr, cfg.decoder.lr));
    }
    f
}

pub fn frontend(cfg: &ExperimentConfig, sample_rate: u32) -> Result<Frontend> {
    let spec = SpectrogramConfig {
        n_filters: multispec_core::PATCH_SIZE,
        ..cfg.spectrogram
    };
    Ok(Frontend::new(spec, sample_rate)?)
}

pub fn mixup(cfg: &ExperimentConfig, stage: MixupStage, seed: u64) -> MixupConfig {
    MixupConfig {
        beta_alpha: cfg.beta_alpha,
        gaussian_mean: cfg.gaussian_mean,
        gaussian_std: cfg.gaussian_std,
        seed,
        stage,
        gaussian_copy: cfg.gaussian_copy,
    }
}

pub fn encoder_config(cfg: &ExperimentConfig, classes: usize, combiner: CombinerKind) -> EncoderConfig {
    EncoderConfig {
        cnn: CnnConfig {
            channels: cfg.encoder.channels,
            ..CnnConfig::full()
        },
        dnn2_dropout: cfg.encoder.dnn2_dropout,
        seed: seed_for(cfg, 1),
        ..EncoderConfig::new(classes, combiner)
    }
}

pub fn encoder_train_config(cfg: &ExperimentConfig) -> EncoderTrainConfig {
    EncoderTrainConfig {
        epochs: cfg.encoder.epochs,
        batch_size: cfg.encoder.batch,
        adam: AdamConfig {
            lr: cfg.encoder.lr,
            ..AdamConfig::default()
        },
        loss: LossConfig {
            l2_lambda: cfg.encoder.l2,
            ..LossConfig::default()
        },
        weights: EncoderLossConfig {
            alpha: cfg.encoder.alpha,
            beta: cfg.encoder.beta,
        },
        mixup: mixup(cfg, MixupStage::Patch, seed_for(cfg, 2)),
        seed: seed_for(cfg, 3),
    }
}

pub fn decoder_config(cfg: &ExperimentConfig, kind: DecoderKind, classes: usize) -> DecoderConfig {
    let d = &cfg.decoder;
    DecoderConfig {
        experts: d.experts,
        dropout: d.dropout,
        forest: RfrConfig {
            n_trees: d.n_trees,
            max_depth: d.max_depth,
            min_leaf: d.min_leaf,
            max_features: d.max_features,
            ..RfrConfig::default()
        },
        train: NeuralTrainConfig {
            epochs: d.epochs,
            batch_size: d.batch,
            adam: AdamConfig {
                lr: d.lr,
                ..AdamConfig::default()
            },
            loss: LossConfig {
                l2_lambda: d.l2,
                ..LossConfig::default()
            },
            mixup: mixup(cfg, MixupStage::Feature, seed_for(cfg, 4)),
            seed: seed_for(cfg, 5),
        },
        seed: seed_for(cfg, 6),
        ..DecoderConfig::new(kind, classes)
    }
}

/// Segments of a split, with manifest path as id, class and device.
pub fn load_segments(cfg: &ExperimentConfig, entries: &[&ManifestEntry]) -> Result<Vec<AudioSegment>> {
    entries
        .par_iter()
        .map(|e| {
            let mut a = read_audio(&e.audio_path, cfg.channel)?.with_label(e.class);
            a.source_id = e.path.clone();
            a.device_id = e.device_id.clone();
            Ok(a)
        })
        .collect()
}

fn split_entries(m: &Manifest, split: Split, fold: Option<u32>) -> Result<Vec<&ManifestEntry>> {
    let v = m.select(split, fold);
    if v.is_empty() {
        return Err(Error::Config(format!("manifest has no {split} entries{}", fold.map_or(String::new(), |f| format!(" in fold {f}")))));
    }
    Ok(v)
}

/// Unnormalized patch triples of every segment, in input order. Segments
/// too short for one patch are skipped with a warning.
pub fn segments_to_patches(frontend: &Frontend, segments: &[AudioSegment]) -> Result<AlignedPatches> {
    let per: Vec<Option<AlignedPatches>> = segments
        .par_iter()
        .map(|s| segment_patches(frontend, None, s))
        .collect::<multispec_core::Result<_>>()?;
    let mut all = AlignedPatches::default();
    for (p, s) in per.into_iter().zip(segments) {
        match p {
            Some(p) => all.extend(p),
            None => log::warn!("{}: too short for a single patch, skipped", s.source_id),
        }
    }
    Ok(all)
}

/// Per-kind mean and standard deviation over all patch values.
pub fn fit_normalizers(data: &AlignedPatches) -> Result<[ZScore; 3]> {
    let mut out = [ZScore { mean: 0.0, std: 1.0 }; 3];
    for (k, z) in out.iter_mut().enumerate() {
        let (mut n, mut sum, mut sq) = (0usize, 0.0f64, 0.0f64);
        for p in &data.patches[k] {
            for &v in p {
                n += 1;
                sum += v as f64;
                sq += v as f64 * v as f64;
            }
        }
        if n == 0 {
            return Err(Error::Config("no training patches to fit normalization".into()));
        }
        let mean = sum / n as f64;
        *z = ZScore {
            mean: mean as f32,
            std: (sq / n as f64 - mean * mean).max(0.0).sqrt().max(1e-6) as f32,
        };
    }
    Ok(out)
}

pub fn normalize(data: &mut AlignedPatches, z: &[ZScore; 3]) {
    for (k, z) in z.iter().enumerate() {
        for p in &mut data.patches[k] {
            z.apply(p);
        }
    }
}

fn sample_rate_of(segments: &[AudioSegment]) -> Result<u32> {
    let sr = segments.first().map(AudioSegment::sample_rate).unwrap_or(16_000);
    if let Some(s) = segments.iter().find(|s| s.sample_rate() != sr) {
        return Err(Error::Config(format!("{} has {} Hz, expected {sr} Hz", s.source_id, s.sample_rate())));
    }
    Ok(sr)
}

// ---- commands ------------------------------------------------------------

/// Writes `audio/*.wav` and `manifest.csv`; the last `test_fraction` of
/// every class goes to the test split.
pub fn synth(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    write_snapshot(cfg, "synth")?;
    let s = &cfg.synth;
    let sc = SynthConfig {
        seconds: s.seconds,
        noise_level: s.noise,
        ..SynthConfig::new(s.classes, s.segments, cfg.seed)
    };
    let segs = generate(&sc)?;
    let audio_dir = cfg.out.join("audio");
    fs::create_dir_all(&audio_dir).map_err(Error::io(&audio_dir))?;
    segs.par_iter()
        .map(|seg| write_wav(audio_dir.join(format!("{}.wav", seg.id)), &seg.samples, sc.sample_rate))
        .collect::<Result<Vec<_>>>()?;
    let names = class_names(s.classes);
    let mut per_class = vec![0usize; s.classes];
    let mut rank = Vec::with_capacity(segs.len());
    for seg in &segs {
        rank.push(per_class[seg.class]);
        per_class[seg.class] += 1;
    }
    let rows: Vec<_> = segs
        .iter()
        .zip(&rank)
        .map(|(seg, &r)| {
            let n = per_class[seg.class];
            let n_test = (n as f64 * s.test_fraction).round() as usize;
            let split = if r >= n - n_test { Split::Test } else { Split::Train };
            (format!("audio/{}.wav", seg.id), names[seg.class].clone(), None, None, split)
        })
        .collect();
    let manifest = cfg.out.join("manifest.csv");
    write_manifest(&manifest, &rows)?;
    Ok(manifest)
}

/// Patch files for the training split and the evaluation split.
pub fn extract(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    write_snapshot(cfg, "extract")?;
    let m = load_manifest(cfg.manifest())?;
    let train = load_segments(cfg, &split_entries(&m, Split::Train, cfg.eval.fold)?)?;
    let test = load_segments(cfg, &split_entries(&m, cfg.eval.split, cfg.eval.fold)?)?;
    let sr = sample_rate_of(&train)?;
    let fe = frontend(cfg, sr)?;
    let mut train_p = segments_to_patches(&fe, &train)?;
    let mut test_p = segments_to_patches(&fe, &test)?;
    let normalizers = if cfg.spectrogram.normalize {
        let z = fit_normalizers(&train_p)?;
        normalize(&mut train_p, &z);
        normalize(&mut test_p, &z);
        Some(z)
    } else {
        None
    };
    for (split, data) in [(Split::Train, train_p), (cfg.eval.split, test_p)] {
        log::info!("{split}: {} patch triples", data.len());
        save_patches(
            patches_path(&cfg.out, split),
            &PatchFile {
                spectrogram: *fe.config(),
                sample_rate: sr,
                normalizers,
                data,
            },
        )?;
    }
    Ok(())
}

fn frontend_info(file: &PatchFile) -> FrontendInfo {
    FrontendInfo {
        spectrogram: file.spectrogram,
        sample_rate: file.sample_rate,
        normalizers: file.normalizers,
    }
}

/// Trains one encoder on a patch file; returns it with its loss log.
pub fn fit_encoder(
    cfg: &ExperimentConfig,
    data: &AlignedPatches,
    classes: usize,
    combiner: CombinerKind,
) -> Result<(EncoderModel, Vec<EpochLog>)> {
    let ec = encoder_config(cfg, classes, combiner);
    let (model, log) = train_encoder(&ec, data, &encoder_train_config(cfg), |e| {
        log::info!(
            "encoder epoch {} loss {:.5} (lm {:.4} ga {:.4} cq {:.4} com {:.4})",
            e.epoch + 1,
            e.total,
            e.terms[0],
            e.terms[1],
            e.terms[2],
            e.terms[3]
        )
    })?;
    Ok((model, log.epochs))
}

pub fn train_encoder_cmd(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    write_snapshot(cfg, "train-encoder")?;
    let m = load_manifest(cfg.manifest())?;
    let file = load_patches(patches_path(&cfg.out, Split::Train))?;
    let (model, log) = fit_encoder(cfg, &file.data, m.n_classes(), cfg.encoder.combiner)?;
    report::write_encoder_log(cfg.out.join("encoder_loss.csv"), &log)?;
    encoder_checkpoint(&model, &frontend_info(&file), &cfg.render(), &deviation_flags(cfg))?
        .save(cfg.out.join(ENCODER_FILE))
}

/// Records of one source, in triple order.
pub fn feature_records(
    model: &EncoderModel,
    data: &AlignedPatches,
    classes: usize,
) -> Result<[Vec<FeatureRecord>; 4]> {
    let ext = extract_features(model, data, 64)?;
    let mut out: [Vec<FeatureRecord>; 4] = Default::default();
    for f in ext.features {
        let label = f.label.map_or_else(|| vec![0.0; classes], |c| one_hot(c, classes));
        out[f.source.index()].push(FeatureRecord {
            segment_id: f.key.segment_id,
            patch_index: f.key.index as u32,
            source: f.source,
            values: f.values,
            label,
            device_id: f.device_id,
        });
    }
    Ok(out)
}

pub fn features(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    write_snapshot(cfg, "features")?;
    let (model, _) = restore_encoder(&Checkpoint::load(cfg.out.join(ENCODER_FILE))?)?;
    let classes = model.classes();
    for split in [Split::Train, cfg.eval.split] {
        let file = load_patches(patches_path(&cfg.out, split))?;
        let recs = feature_records(&model, &file.data, classes)?;
        for (source, r) in FeatureSource::ALL.into_iter().zip(&recs) {
            save_features(features_path(&cfg.out, split, source), r, classes)?;
        }
    }
    Ok(())
}

/// Values and soft labels of a feature file.
pub fn feature_matrix(records: &[FeatureRecord]) -> (Vec<Vec<f32>>, Vec<Vec<f32>>) {
    records.iter().map(|r| (r.values.clone(), r.label.clone())).unzip()
}

pub fn fit_decoder(
    cfg: &ExperimentConfig,
    kind: DecoderKind,
    records: &[FeatureRecord],
    classes: usize,
) -> Result<(DecoderModel, Vec<f64>)> {
    let (x, y) = feature_matrix(records);
    let dc = decoder_config(cfg, kind, classes);
    Ok(DecoderModel::train(&dc, &x, &y, |e, l| {
        log::info!("decoder epoch {} loss {l:.5}", e + 1)
    })?)
}

/// Segment-level scores of a decoder on feature records.
pub fn evaluate_records(
    decoder: &DecoderModel,
    records: &[FeatureRecord],
    classes: usize,
    aggregation: Aggregation,
) -> Result<EvaluationReport> {
    let (x, _) = feature_matrix(records);
    let scores = decoder.predict(&x)?;
    let origins: Vec<PatchOrigin<'_>> = records
        .iter()
        .map(|r| PatchOrigin {
            segment_id: &r.segment_id,
            label: (r.label.iter().sum::<f32>() > 0.0).then(|| argmax(&r.label)),
            device_id: r.device_id.as_deref(),
        })
        .collect();
    let preds = group_by_segment(&origins, &scores, aggregation)?;
    Ok(multispec_core::eval::evaluate(&preds, classes)?)
}

pub fn train_decoder_cmd(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    write_snapshot(cfg, "train-decoder")?;
    let (records, classes) = load_features(features_path(&cfg.out, Split::Train, cfg.decoder.source))?;
    let (model, log) = fit_decoder(cfg, cfg.decoder.kind, &records, classes)?;
    report::write_decoder_log(cfg.out.join("decoder_loss.csv"), &log)?;
    decoder_checkpoint(&model, cfg.decoder.source, &cfg.render(), &deviation_flags(cfg))?
        .save(cfg.out.join(DECODER_FILE))
}

/// Encoder plus (when present) decoder from the output directory.
pub fn load_stack(cfg: &ExperimentConfig, with_decoder: bool) -> Result<ModelStack> {
    let (encoder, info) = restore_encoder(&Checkpoint::load(cfg.out.join(ENCODER_FILE))?)?;
    let fe = Frontend::new(info.spectrogram, info.sample_rate)?;
    let mut stack = ModelStack::new(fe, encoder, cfg.decoder.source);
    stack.normalizers = info.normalizers;
    stack.aggregation = cfg.eval.aggregation;
    if with_decoder {
        let (decoder, source) = restore_decoder(&Checkpoint::load(cfg.out.join(DECODER_FILE))?)?;
        stack.decoder = Some(decoder);
        stack.source = source;
    }
    Ok(stack)
}

fn eval_segments(cfg: &ExperimentConfig) -> Result<(Manifest, Vec<AudioSegment>)> {
    let m = load_manifest(cfg.manifest())?;
    let segs = load_segments(cfg, &split_entries(&m, cfg.eval.split, cfg.eval.fold)?)?;
    Ok((m, segs))
}

/// Full stack on the evaluation split's audio.
pub fn evaluate(cfg: &ExperimentConfig, with_decoder: bool) -> Result<EvaluationReport> {
    cfg.validate()?;
    write_snapshot(cfg, "evaluate")?;
    let stack = load_stack(cfg, with_decoder)?;
    let (m, segs) = eval_segments(cfg)?;
    let mut rep = stack.evaluate_segments(&segs)?;
    rep.fold = cfg.eval.fold.map(|f| f as usize);
    report::write_report(&cfg.out, "report", &rep, &m.classes)?;
    Ok(rep)
}

pub fn early_eval(cfg: &ExperimentConfig, with_decoder: bool) -> Result<Vec<(f64, Option<f64>)>> {
    cfg.validate()?;
    write_snapshot(cfg, "early-eval")?;
    let stack = load_stack(cfg, with_decoder)?;
    let (_, segs) = eval_segments(cfg)?;
    let curve = early_classification_curve(&stack, &segs, &cfg.eval.crops)?;
    report::write_curve(cfg.out.join("early_curve.csv"), &curve)?;
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub combiner: CombinerKind,
    /// `None` for the encoder-only result.
    pub decoder: Option<DecoderKind>,
    pub accuracy: f64,
}

/// Three encoders, one per combiner, each scored alone (combined head) and
/// with each of the three decoders on combined features.
pub fn grid(cfg: &ExperimentConfig) -> Result<Vec<GridRow>> {
    cfg.validate()?;
    write_snapshot(cfg, "grid")?;
    let m = load_manifest(cfg.manifest())?;
    let classes = m.n_classes();
    let train = load_patches(patches_path(&cfg.out, Split::Train))?;
    let test = load_patches(patches_path(&cfg.out, cfg.eval.split))?;
    let fe = Frontend::new(train.spectrogram, train.sample_rate)?;
    let mut rows = Vec::new();
    for combiner in CombinerKind::ALL {
        let (encoder, _) = fit_encoder(cfg, &train.data, classes, combiner)?;
        let mut stack = ModelStack::new(fe.clone(), encoder, FeatureSource::Combined);
        stack.aggregation = cfg.eval.aggregation;
        let acc = |stack: &ModelStack| -> Result<f64> {
            let preds = stack.predict_patches(&test.data)?;
            Ok(multispec_core::eval::evaluate(&preds, classes)?.overall)
        };
        rows.push(GridRow {
            combiner,
            decoder: None,
            accuracy: acc(&stack)?,
        });
        let recs = feature_records(&stack.encoder, &train.data, classes)?;
        for kind in DecoderKind::ALL {
            let (decoder, _) = fit_decoder(cfg, kind, &recs[FeatureSource::Combined.index()], classes)?;
            stack.decoder = Some(decoder);
            rows.push(GridRow {
                combiner,
                decoder: Some(kind),
                accuracy: acc(&stack)?,
            });
        }
        log::info!("grid: {} done", combiner.name());
    }
    report::write_grid(cfg.out.join("grid.csv"), &rows)?;
    Ok(rows)
}
