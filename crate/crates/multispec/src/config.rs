//! Experiment configuration: a flat `key = value` file with `[sections]`,
//! overridden by `ASC_<SECTION>_<KEY>` environment variables and then by
//! command-line flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use multispec_core::decoders::DecoderKind;
use multispec_core::dsp::SpectrogramConfig;
use multispec_core::encoder::{CnnConfig, CombinerKind, FeatureSource};
use multispec_core::eval::Aggregation;
use multispec_core::FEATURE_DIM;

use crate::manifest::Split;
use crate::{Error, Result};

/// Every recognised key, in snapshot order.
pub const KEYS: &[&str] = &[
    "paths.manifest",
    "paths.out",
    "run.seed",
    "run.threads",
    "run.channel",
    "spectrogram.window_ms",
    "spectrogram.hop_ms",
    "spectrogram.log_floor",
    "spectrogram.normalize",
    "mixup.beta_alpha",
    "mixup.gaussian_mean",
    "mixup.gaussian_std",
    "mixup.gaussian_copy",
    "encoder.combiner",
    "encoder.channels",
    "encoder.alpha",
    "encoder.beta",
    "encoder.epochs",
    "encoder.batch",
    "encoder.lr",
    "encoder.l2",
    "encoder.dnn2_dropout",
    "decoder.kind",
    "decoder.source",
    "decoder.experts",
    "decoder.dropout",
    "decoder.n_trees",
    "decoder.max_depth",
    "decoder.min_leaf",
    "decoder.max_features",
    "decoder.epochs",
    "decoder.batch",
    "decoder.lr",
    "decoder.l2",
    "eval.crops",
    "eval.aggregation",
    "eval.split",
    "eval.fold",
    "synth.classes",
    "synth.segments",
    "synth.seconds",
    "synth.noise",
    "synth.test_fraction",
];

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSettings {
    pub combiner: CombinerKind,
    pub channels: [usize; 6],
    pub alpha: f32,
    pub beta: f32,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f32,
    pub l2: f32,
    pub dnn2_dropout: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderSettings {
    pub kind: DecoderKind,
    pub source: FeatureSource,
    pub experts: usize,
    pub dropout: f32,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub max_features: Option<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f32,
    pub l2: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub crops: Vec<f64>,
    pub aggregation: Aggregation,
    pub split: Split,
    pub fold: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub classes: usize,
    pub segments: usize,
    pub seconds: f64,
    pub noise: f64,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub channel: usize,
    pub spectrogram: SpectrogramConfig,
    pub beta_alpha: f64,
    pub gaussian_mean: f64,
    pub gaussian_std: f64,
    pub gaussian_copy: bool,
    pub encoder: EncoderSettings,
    pub decoder: DecoderSettings,
    pub eval: EvalSettings,
    pub synth: SynthSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            out: PathBuf::from("out"),
            seed: 0,
            threads: 0,
            channel: 0,
            spectrogram: SpectrogramConfig::default(),
            beta_alpha: 0.4,
            gaussian_mean: 0.5,
            gaussian_std: 0.15,
            gaussian_copy: true,
            encoder: EncoderSettings {
                combiner: CombinerKind::Lin,
                channels: CnnConfig::full().channels,
                alpha: 1.0 / 3.0,
                beta: 1.0,
                epochs: 200,
                batch: 50,
                lr: 1e-4,
                l2: 1e-4,
                dnn2_dropout: 0.3,
            },
            decoder: DecoderSettings {
                kind: DecoderKind::Moe,
                source: FeatureSource::Combined,
                experts: 10,
                dropout: 0.3,
                n_trees: 100,
                max_depth: Some(20),
                min_leaf: 2,
                max_features: Some(16),
                epochs: 200,
                batch: 50,
                lr: 1e-4,
                l2: 1e-4,
            },
            eval: EvalSettings {
                crops: (1..=10).map(f64::from).collect(),
                aggregation: Aggregation::Mean,
                split: Split::Test,
                fold: None,
            },
            synth: SynthSettings {
                classes: 4,
                segments: 200,
                seconds: 10.0,
                noise: 0.01,
                test_fraction: 0.2,
            },
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

/// `none` (any case) or an empty value means unlimited.
fn parse_limit(key: &str, v: &str) -> Result<Option<usize>> {
    if v.is_empty() || v.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn show_limit(v: Option<usize>) -> String {
    v.map_or("none".into(), |n| n.to_string())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Defaults, then the file (if any), then environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(Error::io(p))?;
            cfg.merge_text(&text)?;
            if let (Some(m), Some(dir)) = (&cfg.manifest, p.parent()) {
                if m.is_relative() {
                    cfg.manifest = Some(dir.join(m));
                }
            }
        }
        cfg.apply_env(std::env::vars())?;
        Ok(cfg)
    }

    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let at = |m: String| Error::Config(format!("line {}: {m}", i + 1));
            if let Some(name) = line.strip_prefix('[') {
                section = name
                    .strip_suffix(']')
                    .ok_or_else(|| at(format!("malformed section header '{line}'")))?
                    .trim()
                    .to_ascii_lowercase();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| at(format!("expected key = value, got '{line}'")))?;
            if section.is_empty() {
                return Err(at(format!("key '{}' outside any section", k.trim())));
            }
            let key = format!("{section}.{}", k.trim().to_ascii_lowercase());
            self.set(&key, v.trim()).map_err(|e| at(e.to_string()))?;
        }
        Ok(())
    }

    /// Applies `ASC_<SECTION>_<KEY>` variables for every known key.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        let vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with("ASC_")).collect();
        for key in KEYS {
            let name = format!("ASC_{}", key.replace('.', "_").to_ascii_uppercase());
            if let Some((_, v)) = vars.iter().find(|(k, _)| *k == name) {
                self.set(key, v.trim()).map_err(|e| Error::Config(format!("{name}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Applies one `section.key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected section.key=value, got '{pair}'")))?;
        self.set(&k.trim().to_ascii_lowercase(), v.trim())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let e = &mut self.encoder;
        let d = &mut self.decoder;
        match key {
            "paths.manifest" => self.manifest = (!v.is_empty()).then(|| PathBuf::from(v)),
            "paths.out" => self.out = PathBuf::from(v),
            "run.seed" => self.seed = parse(key, v)?,
            "run.threads" => self.threads = parse(key, v)?,
            "run.channel" => self.channel = parse(key, v)?,
            "spectrogram.window_ms" => self.spectrogram.window_ms = parse(key, v)?,
            "spectrogram.hop_ms" => self.spectrogram.hop_ms = parse(key, v)?,
            "spectrogram.log_floor" => self.spectrogram.log_floor = parse(key, v)?,
            "spectrogram.normalize" => self.spectrogram.normalize = parse_bool(key, v)?,
            "mixup.beta_alpha" => self.beta_alpha = parse(key, v)?,
            "mixup.gaussian_mean" => self.gaussian_mean = parse(key, v)?,
            "mixup.gaussian_std" => self.gaussian_std = parse(key, v)?,
            "mixup.gaussian_copy" => self.gaussian_copy = parse_bool(key, v)?,
            "encoder.combiner" => e.combiner = CombinerKind::parse(v)?,
            "encoder.channels" => {
                e.channels = match v.to_ascii_lowercase().as_str() {
                    "full" => CnnConfig::full().channels,
                    "compact" => CnnConfig::compact().channels,
                    _ => {
                        let w: Vec<usize> = v.split(',').map(|x| parse(key, x.trim())).collect::<Result<_>>()?;
                        w.try_into()
                            .map_err(|_| Error::Config(format!("{key}: need six widths, 'full' or 'compact'")))?
                    }
                }
            }
            "encoder.alpha" => e.alpha = parse(key, v)?,
            "encoder.beta" => e.beta = parse(key, v)?,
            "encoder.epochs" => e.epochs = parse(key, v)?,
            "encoder.batch" => e.batch = parse(key, v)?,
            "encoder.lr" => e.lr = parse(key, v)?,
            "encoder.l2" => e.l2 = parse(key, v)?,
            "encoder.dnn2_dropout" => e.dnn2_dropout = parse(key, v)?,
            "decoder.kind" => d.kind = DecoderKind::parse(v)?,
            "decoder.source" => d.source = FeatureSource::parse(v)?,
            "decoder.experts" => d.experts = parse(key, v)?,
            "decoder.dropout" => d.dropout = parse(key, v)?,
            "decoder.n_trees" => d.n_trees = parse(key, v)?,
            "decoder.max_depth" => d.max_depth = parse_limit(key, v)?,
            "decoder.min_leaf" => d.min_leaf = parse(key, v)?,
            "decoder.max_features" => d.max_features = parse_limit(key, v)?,
            "decoder.epochs" => d.epochs = parse(key, v)?,
            "decoder.batch" => d.batch = parse(key, v)?,
            "decoder.lr" => d.lr = parse(key, v)?,
            "decoder.l2" => d.l2 = parse(key, v)?,
            "eval.crops" => {
                self.eval.crops = v.split(',').map(|x| parse(key, x.trim())).collect::<Result<_>>()?;
            }
            "eval.aggregation" => self.eval.aggregation = Aggregation::parse(v)?,
            "eval.split" => {
                self.eval.split = Split::parse(v).ok_or_else(|| Error::Config(format!("{key}: unknown split '{v}'")))?
            }
            "eval.fold" => {
                self.eval.fold = if v.is_empty() || v.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            "synth.classes" => self.synth.classes = parse(key, v)?,
            "synth.segments" => self.synth.segments = parse(key, v)?,
            "synth.seconds" => self.synth.seconds = parse(key, v)?,
            "synth.noise" => self.synth.noise = parse(key, v)?,
            "synth.test_fraction" => self.synth.test_fraction = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> String {
        let e = &self.encoder;
        let d = &self.decoder;
        match key {
            "paths.manifest" => self.manifest.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "paths.out" => self.out.display().to_string(),
            "run.seed" => self.seed.to_string(),
            "run.threads" => self.threads.to_string(),
            "run.channel" => self.channel.to_string(),
            "spectrogram.window_ms" => self.spectrogram.window_ms.to_string(),
            "spectrogram.hop_ms" => self.spectrogram.hop_ms.to_string(),
            "spectrogram.log_floor" => self.spectrogram.log_floor.to_string(),
            "spectrogram.normalize" => self.spectrogram.normalize.to_string(),
            "mixup.beta_alpha" => self.beta_alpha.to_string(),
            "mixup.gaussian_mean" => self.gaussian_mean.to_string(),
            "mixup.gaussian_std" => self.gaussian_std.to_string(),
            "mixup.gaussian_copy" => self.gaussian_copy.to_string(),
            "encoder.combiner" => e.combiner.name().into(),
            "encoder.channels" => join(&e.channels),
            "encoder.alpha" => e.alpha.to_string(),
            "encoder.beta" => e.beta.to_string(),
            "encoder.epochs" => e.epochs.to_string(),
            "encoder.batch" => e.batch.to_string(),
            "encoder.lr" => e.lr.to_string(),
            "encoder.l2" => e.l2.to_string(),
            "encoder.dnn2_dropout" => e.dnn2_dropout.to_string(),
            "decoder.kind" => d.kind.name().into(),
            "decoder.source" => d.source.name().into(),
            "decoder.experts" => d.experts.to_string(),
            "decoder.dropout" => d.dropout.to_string(),
            "decoder.n_trees" => d.n_trees.to_string(),
            "decoder.max_depth" => show_limit(d.max_depth),
            "decoder.min_leaf" => d.min_leaf.to_string(),
            "decoder.max_features" => show_limit(d.max_features),
            "decoder.epochs" => d.epochs.to_string(),
            "decoder.batch" => d.batch.to_string(),
            "decoder.lr" => d.lr.to_string(),
            "decoder.l2" => d.l2.to_string(),
            "eval.crops" => join(&self.eval.crops),
            "eval.aggregation" => self.eval.aggregation.name().into(),
            "eval.split" => self.eval.split.name().into(),
            "eval.fold" => self.eval.fold.map_or("none".into(), |f| f.to_string()),
            "synth.classes" => self.synth.classes.to_string(),
            "synth.segments" => self.synth.segments.to_string(),
            "synth.seconds" => self.synth.seconds.to_string(),
            "synth.noise" => self.synth.noise.to_string(),
            "synth.test_fraction" => self.synth.test_fraction.to_string(),
            _ => String::new(),
        }
    }

    /// Resolved configuration in the file format; parsing it reproduces
    /// `self`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for key in KEYS {
            let (s, k) = key.split_once('.').expect("dotted key");
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{s}]");
                section = s;
            }
            let _ = writeln!(out, "{k} = {}", self.get(key));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.spectrogram.validate()?;
        if self.encoder.channels[5] != FEATURE_DIM {
            return Err(Error::Config(format!("encoder.channels must end in {FEATURE_DIM}")));
        }
        if self.encoder.batch == 0 || self.decoder.batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.synth.test_fraction) {
            return Err(Error::Config("synth.test_fraction must be in [0, 1)".into()));
        }
        if self.eval.crops.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::Config("eval.crops must be positive".into()));
        }
        Ok(())
    }

    /// `paths.manifest`, or `manifest.csv` in the output directory as
    /// written by `synth`.
    pub fn manifest(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.out.join("manifest.csv"))
    }
}
