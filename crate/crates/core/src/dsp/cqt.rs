use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::fft::{next_pow2, Complex, RealFft};
use crate::math::{cos64, pow64};
use crate::{Error, Result};

/// Spectral-kernel entries below this fraction of the row peak are dropped.
const KERNEL_SPARSITY: f64 = 1e-3;

/// Constant-Q transform evaluated through sparse spectral kernels.
///
/// Bin `k` is centered at `f_min * 2^(k / bins_per_octave)` and analysed with
/// a Hann window of `Q * fs / f_k` samples, where
/// `Q = 1 / (2^(1 / bins_per_octave) - 1)`. Each windowed complex exponential
/// is transformed once; a frame's constant-Q coefficients are then inner
/// products between the frame's FFT and those kernels.
#[derive(Debug, Clone)]
pub struct ConstantQ {
    pub bins_per_octave: usize,
    pub f_min: f64,
    pub q: f64,
    centers: Vec<f64>,
    lengths: Vec<usize>,
    fft: RealFft,
    kernels: Vec<Kernel>,
}

/// Per-bin evaluation route, whichever needs fewer multiplies.
#[derive(Debug, Clone)]
enum Kernel {
    /// Sparse conjugated spectrum starting at FFT bin `first`.
    Spectral { first: usize, coeffs: Vec<Complex> },
    /// Conjugated atom applied directly to samples starting `offset` before
    /// the frame center.
    Temporal { offset: usize, atom: Vec<Complex> },
}

impl ConstantQ {
    /// `n_bins` bins at `bins_per_octave`, with the top octave ending at Nyquist.
    pub fn new(n_bins: usize, bins_per_octave: usize, sample_rate: u32) -> Result<Self> {
        if n_bins == 0 || bins_per_octave == 0 || n_bins % bins_per_octave != 0 {
            return Err(Error::Config(alloc::format!(
                "{n_bins} CQT bins is not a whole number of {bins_per_octave}-bin octaves"
            )));
        }
        let octaves = (n_bins / bins_per_octave) as f64;
        let f_min = sample_rate as f64 / 2.0 / pow64(2.0, octaves);
        Self::with_fmin(n_bins, bins_per_octave, f_min, sample_rate)
    }

    pub fn with_fmin(
        n_bins: usize,
        bins_per_octave: usize,
        f_min: f64,
        sample_rate: u32,
    ) -> Result<Self> {
        let fs = sample_rate as f64;
        let ratio = pow64(2.0, 1.0 / bins_per_octave as f64);
        let q = 1.0 / (ratio - 1.0);
        let centers: Vec<f64> = (0..n_bins)
            .map(|k| f_min * pow64(2.0, k as f64 / bins_per_octave as f64))
            .collect();
        if !(f_min > 0.0) || centers.last().copied().unwrap_or(0.0) >= fs / 2.0 {
            return Err(Error::Config("CQT bins must lie in (0, Nyquist)".into()));
        }
        let lengths: Vec<usize> = centers
            .iter()
            .map(|&f| libm::ceil(q * fs / f) as usize)
            .collect();
        let fft_len = next_pow2(lengths[0]).max(2);
        let fft = RealFft::new(fft_len)?;

        let mut kernels = Vec::with_capacity(n_bins);
        let mut temporal = vec![0.0f64; fft_len];
        for (&f, &len) in centers.iter().zip(&lengths) {
            // The kernel is the conjugate-free analytic atom; its FFT is taken
            // as two real transforms (real and imaginary parts).
            let offset = fft_len / 2 - len / 2;
            let atom: Vec<Complex> = (0..len)
                .map(|n| {
                    let w = 0.5 - 0.5 * cos64(2.0 * PI * n as f64 / len as f64);
                    let phase = 2.0 * PI * f * (n as f64 - (len / 2) as f64) / fs;
                    Complex::cis(phase).scale(w / len as f64)
                })
                .collect();
            temporal.iter_mut().for_each(|v| *v = 0.0);
            for (n, a) in atom.iter().enumerate() {
                temporal[offset + n] = a.re;
            }
            let re_spec = fft.process(&temporal);
            temporal.iter_mut().for_each(|v| *v = 0.0);
            for (n, a) in atom.iter().enumerate() {
                temporal[offset + n] = a.im;
            }
            let im_spec = fft.process(&temporal);
            // FFT(re + i*im) = FFT(re) + i * FFT(im) on the positive half.
            let spec: Vec<Complex> = re_spec
                .iter()
                .zip(&im_spec)
                .map(|(r, i)| *r + Complex::new(-i.im, i.re))
                .collect();
            let peak = spec.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max).sqrt();
            let keep = |c: &Complex| c.norm_sqr().sqrt() >= KERNEL_SPARSITY * peak;
            let first = spec.iter().position(keep).unwrap_or(0);
            let last = spec.iter().rposition(keep).map_or(first, |l| l + 1);
            let scale = 1.0 / fft_len as f64;
            if last - first <= len {
                kernels.push(Kernel::Spectral {
                    first,
                    coeffs: spec[first..last].iter().map(|c| c.conj().scale(scale)).collect(),
                });
            } else {
                kernels.push(Kernel::Temporal {
                    offset: len / 2,
                    atom: atom.iter().map(|c| c.conj()).collect(),
                });
            }
        }
        Ok(Self {
            bins_per_octave,
            f_min,
            q,
            centers,
            lengths,
            fft,
            kernels,
        })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn n_bins(&self) -> usize {
        self.centers.len()
    }

    /// Window length of the lowest (longest) bin.
    pub fn longest_window(&self) -> usize {
        self.lengths[0]
    }

    pub fn fft_len(&self) -> usize {
        self.fft.len()
    }

    /// Squared constant-Q magnitudes for frames centered at
    /// `first_center + t * hop`, `t < frames`. Samples outside the signal read
    /// as zero. Output is frame-major `frames x n_bins`.
    pub fn power(
        &self,
        samples: &[f32],
        first_center: usize,
        hop: usize,
        frames: usize,
    ) -> Result<Vec<f64>> {
        if samples.len() < self.longest_window() {
            return Err(Error::Config(alloc::format!(
                "CQT f_min {:.2} Hz needs {} samples per window but the audio has {}",
                self.f_min,
                self.longest_window(),
                samples.len()
            )));
        }
        let l = self.fft.len();
        let nb = self.n_bins();
        let mut buf = vec![0.0f64; l];
        let mut scratch = vec![Complex::ZERO; l / 2];
        let mut spec = vec![Complex::ZERO; l / 2 + 1];
        let mut out = vec![0.0f64; frames * nb];
        for t in 0..frames {
            let center = (first_center + t * hop) as isize;
            let start = center - (l / 2) as isize;
            for (i, b) in buf.iter_mut().enumerate() {
                let idx = start + i as isize;
                *b = if idx >= 0 && (idx as usize) < samples.len() {
                    samples[idx as usize] as f64
                } else {
                    0.0
                };
            }
            self.fft.process_with(&buf, &mut scratch, &mut spec);
            for (k, kernel) in self.kernels.iter().enumerate() {
                let acc = match kernel {
                    Kernel::Spectral { first, coeffs } => coeffs
                        .iter()
                        .zip(&spec[*first..])
                        .fold(Complex::ZERO, |acc, (w, x)| acc + *w * *x),
                    Kernel::Temporal { offset, atom } => {
                        let from = l / 2 - offset;
                        atom.iter()
                            .zip(&buf[from..])
                            .fold(Complex::ZERO, |acc, (w, &x)| acc + w.scale(x))
                    }
                };
                out[t * nb + k] = acc.norm_sqr();
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_centers() {
        let cqt = ConstantQ::new(128, 16, 16_000).unwrap();
        assert!((cqt.f_min - 16_000.0 / 512.0).abs() < 1e-12);
        let ratio = pow64(2.0, 1.0 / 16.0);
        for w in cqt.centers().windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-12);
        }
        assert!(*cqt.centers().last().unwrap() < 8000.0);
    }

    #[test]
    fn rejects_partial_octaves() {
        assert!(ConstantQ::new(120, 16, 16_000).is_err());
    }

    #[test]
    fn short_audio_rejected() {
        let cqt = ConstantQ::new(128, 16, 16_000).unwrap();
        let short = vec![0.0f32; cqt.longest_window() - 1];
        assert!(matches!(cqt.power(&short, 0, 96, 1), Err(Error::Config(_))));
    }
}
