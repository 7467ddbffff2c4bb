use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::fft::{next_pow2, Complex, RealFft};
use super::{AudioSegment, SpectrogramConfig};
use crate::math::cos64;
use crate::{Error, Result};

/// Row-major `frames x bins` matrix of squared STFT magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl PowerSpectrum {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }
}

/// Hamming-windowed short-time Fourier transform for one sample rate.
#[derive(Debug, Clone)]
pub struct Stft {
    frame_len: usize,
    hop: usize,
    window: Vec<f64>,
    fft: RealFft,
}

impl Stft {
    pub fn new(cfg: &SpectrogramConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate()?;
        let frame_len = cfg.frame_len(sample_rate);
        let hop = cfg.hop_len(sample_rate);
        let fft = RealFft::new(next_pow2(frame_len).max(2))?;
        Ok(Self {
            frame_len,
            hop,
            window: hamming(frame_len),
            fft,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn fft_len(&self) -> usize {
        self.fft.len()
    }

    /// One-sided bin count, `fft_len / 2 + 1`.
    pub fn bins(&self) -> usize {
        self.fft.bins()
    }

    pub fn frame_count(&self, len: usize) -> Option<usize> {
        (len >= self.frame_len).then(|| 1 + (len - self.frame_len) / self.hop)
    }

    /// Complex spectra, frame-major.
    pub fn spectra(&self, samples: &[f32]) -> Result<(usize, Vec<Complex>)> {
        let frames = self.frame_count(samples.len()).ok_or(Error::TooShort {
            len: samples.len(),
            needed: self.frame_len,
        })?;
        let n_fft = self.fft.len();
        let bins = self.bins();
        let mut buf = vec![0.0f64; n_fft];
        let mut scratch = vec![Complex::ZERO; n_fft / 2];
        let mut out = vec![Complex::ZERO; frames * bins];
        for t in 0..frames {
            let start = t * self.hop;
            let frame = &samples[start..start + self.frame_len];
            for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
                *b = x as f64 * w;
            }
            self.fft
                .process_with(&buf, &mut scratch, &mut out[t * bins..(t + 1) * bins]);
        }
        Ok((frames, out))
    }

    pub fn power(&self, samples: &[f32]) -> Result<PowerSpectrum> {
        let (frames, spectra) = self.spectra(samples)?;
        Ok(PowerSpectrum {
            frames,
            bins: self.bins(),
            values: spectra.iter().map(|c| c.norm_sqr()).collect(),
        })
    }

    /// `frames x bins` magnitude matrix, frame-major.
    pub fn magnitude(&self, samples: &[f32]) -> Result<Vec<f64>> {
        let (_, spectra) = self.spectra(samples)?;
        Ok(spectra.iter().map(|c| c.norm_sqr().sqrt()).collect())
    }
}

/// Symmetric Hamming window.
pub(crate) fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * cos64(2.0 * PI * i as f64 / (n - 1) as f64))
        .collect()
}

/// Magnitude STFT of a segment: returns `(frames, bins, values)`.
pub fn stft(audio: &AudioSegment, cfg: &SpectrogramConfig) -> Result<(usize, usize, Vec<f64>)> {
    let plan = Stft::new(cfg, audio.sample_rate())?;
    let mag = plan.magnitude(audio.samples())?;
    let bins = plan.bins();
    Ok((mag.len() / bins, bins, mag))
}
