use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::cqt::ConstantQ;
use super::gammatone::GammatoneFilterbank;
use super::mel::{mel_filterbank, Filterbank};
use super::stft::{PowerSpectrum, Stft};
use super::{AudioSegment, SpectrogramConfig, SpectrogramKind};
use crate::math::{ln64, sqrt64};
use crate::{Error, Result};

/// CQT resolution; 128 bins at this density cover eight octaves.
pub const CQT_BINS_PER_OCTAVE: usize = 16;

/// A log-compressed `frames x bins` time-frequency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub kind: SpectrogramKind,
    pub frames: usize,
    pub bins: usize,
    /// Frame-major values.
    pub values: Vec<f32>,
    pub config: SpectrogramConfig,
    pub sample_rate: u32,
    pub source_id: String,
    pub device_id: Option<String>,
    pub label: Option<usize>,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }

    /// Mean over frames for each bin.
    pub fn time_average(&self) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.bins];
        for t in 0..self.frames {
            for (a, &v) in acc.iter_mut().zip(self.frame(t)) {
                *a += v as f64;
            }
        }
        acc.iter_mut().for_each(|a| *a /= self.frames.max(1) as f64);
        acc
    }
}

/// All three analysis banks for one sample rate. Immutable once built.
#[derive(Debug, Clone)]
pub struct Frontend {
    config: SpectrogramConfig,
    sample_rate: u32,
    stft: Stft,
    mel: Filterbank,
    gammatone: GammatoneFilterbank,
    cqt: ConstantQ,
}

impl Frontend {
    pub fn new(config: SpectrogramConfig, sample_rate: u32) -> Result<Self> {
        config.validate()?;
        let stft = Stft::new(&config, sample_rate)?;
        let mel = mel_filterbank(stft.bins(), config.n_filters, sample_rate)?;
        let gammatone = GammatoneFilterbank::new(config.n_filters, stft.bins(), sample_rate)?;
        let cqt = ConstantQ::new(config.n_filters, CQT_BINS_PER_OCTAVE, sample_rate)?;
        Ok(Self {
            config,
            sample_rate,
            stft,
            mel,
            gammatone,
            cqt,
        })
    }

    pub fn config(&self) -> &SpectrogramConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn stft(&self) -> &Stft {
        &self.stft
    }

    pub fn mel(&self) -> &Filterbank {
        &self.mel
    }

    pub fn gammatone(&self) -> &GammatoneFilterbank {
        &self.gammatone
    }

    pub fn cqt(&self) -> &ConstantQ {
        &self.cqt
    }

    fn check_rate(&self, audio: &AudioSegment) -> Result<()> {
        if audio.sample_rate() != self.sample_rate {
            return Err(Error::Config(alloc::format!(
                "front-end built for {} Hz, audio is {} Hz",
                self.sample_rate,
                audio.sample_rate()
            )));
        }
        Ok(())
    }

    /// Filterbank energies before the logarithm, `frames x 128`.
    pub fn filtered_power(&self, kind: SpectrogramKind, audio: &AudioSegment) -> Result<Vec<f64>> {
        self.check_rate(audio)?;
        match kind {
            SpectrogramKind::LogMel => {
                let power = self.stft.power(audio.samples())?;
                Ok(apply_bank(&self.mel, &power))
            }
            SpectrogramKind::Gamma => {
                let power = self.stft.power(audio.samples())?;
                Ok(apply_bank(self.gammatone.weights(), &power))
            }
            SpectrogramKind::Cqt => {
                let frames = self.stft.frame_count(audio.len()).ok_or(Error::TooShort {
                    len: audio.len(),
                    needed: self.stft.frame_len(),
                })?;
                self.cqt.power(
                    audio.samples(),
                    self.stft.frame_len() / 2,
                    self.stft.hop(),
                    frames,
                )
            }
        }
    }

    pub fn compute(&self, kind: SpectrogramKind, audio: &AudioSegment) -> Result<Spectrogram> {
        let power = self.filtered_power(kind, audio)?;
        Ok(self.finish(kind, audio, power))
    }

    /// LogMel, Gamma and CQT in that order, sharing one STFT pass.
    pub fn compute_all(&self, audio: &AudioSegment) -> Result<[Spectrogram; 3]> {
        self.check_rate(audio)?;
        let power = self.stft.power(audio.samples())?;
        let mel = apply_bank(&self.mel, &power);
        let gamma = apply_bank(self.gammatone.weights(), &power);
        let cqt = self.cqt.power(
            audio.samples(),
            self.stft.frame_len() / 2,
            self.stft.hop(),
            power.frames,
        )?;
        Ok([
            self.finish(SpectrogramKind::LogMel, audio, mel),
            self.finish(SpectrogramKind::Gamma, audio, gamma),
            self.finish(SpectrogramKind::Cqt, audio, cqt),
        ])
    }

    fn finish(&self, kind: SpectrogramKind, audio: &AudioSegment, power: Vec<f64>) -> Spectrogram {
        let bins = self.config.n_filters;
        let floor = self.config.log_floor;
        Spectrogram {
            kind,
            frames: power.len() / bins,
            bins,
            values: power.iter().map(|&p| ln64(p + floor) as f32).collect(),
            config: self.config.with_kind(kind),
            sample_rate: self.sample_rate,
            source_id: audio.source_id.clone(),
            device_id: audio.device_id.clone(),
            label: audio.label,
        }
    }
}

fn apply_bank(bank: &Filterbank, power: &PowerSpectrum) -> Vec<f64> {
    let nf = bank.n_filters();
    let mut out = vec![0.0; power.frames * nf];
    for t in 0..power.frames {
        bank.apply(power.frame(t), &mut out[t * nf..(t + 1) * nf]);
    }
    out
}

fn single(kind: SpectrogramKind, audio: &AudioSegment, cfg: &SpectrogramConfig) -> Result<Spectrogram> {
    if cfg.kind != kind {
        return Err(Error::Config(alloc::format!(
            "config requests {:?}, called for {:?}",
            cfg.kind,
            kind
        )));
    }
    Frontend::new(*cfg, audio.sample_rate())?.compute(kind, audio)
}

/// `ln(mel_bank * |STFT|^2 + log_floor)`
pub fn log_mel_spectrogram(audio: &AudioSegment, cfg: &SpectrogramConfig) -> Result<Spectrogram> {
    single(SpectrogramKind::LogMel, audio, cfg)
}

/// `ln(gammatone_weights * |STFT|^2 + log_floor)`
pub fn gammatone_spectrogram(audio: &AudioSegment, cfg: &SpectrogramConfig) -> Result<Spectrogram> {
    single(SpectrogramKind::Gamma, audio, cfg)
}

/// `ln(|CQT|^2 + log_floor)` on the STFT frame grid.
pub fn cqt_spectrogram(audio: &AudioSegment, cfg: &SpectrogramConfig) -> Result<Spectrogram> {
    single(SpectrogramKind::Cqt, audio, cfg)
}

/// Scalar z-score statistics fitted over a training set of one kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZScore {
    pub mean: f32,
    pub std: f32,
}

impl ZScore {
    pub fn fit<'a>(spectrograms: impl IntoIterator<Item = &'a Spectrogram>) -> Result<Self> {
        let (mut n, mut sum, mut sq) = (0usize, 0.0f64, 0.0f64);
        for s in spectrograms {
            for &v in &s.values {
                n += 1;
                sum += v as f64;
                sq += v as f64 * v as f64;
            }
        }
        if n == 0 {
            return Err(Error::Empty("no spectrogram values to fit".into()));
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        Ok(Self {
            mean: mean as f32,
            std: sqrt64(var).max(1e-6) as f32,
        })
    }

    pub fn apply(&self, values: &mut [f32]) {
        for v in values {
            *v = (*v - self.mean) / self.std;
        }
    }
}
