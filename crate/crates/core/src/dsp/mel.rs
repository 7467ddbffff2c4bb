use alloc::vec;
use alloc::vec::Vec;

use crate::math::{log10_64, pow64};
use crate::{Error, Result};

/// `2595 * log10(1 + f / 700)`
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * log10_64(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (pow64(10.0, mel / 2595.0) - 1.0)
}

/// Non-negative weight matrix stored as one contiguous nonzero run per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Filterbank {
    n_bins: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

impl Filterbank {
    /// Builds from dense rows, trimming leading and trailing zeros.
    pub fn from_dense(n_bins: usize, dense: Vec<Vec<f64>>) -> Self {
        let rows = dense
            .into_iter()
            .map(|row| {
                debug_assert_eq!(row.len(), n_bins);
                let first = row.iter().position(|&w| w != 0.0).unwrap_or(0);
                let last = row.iter().rposition(|&w| w != 0.0).map_or(0, |l| l + 1);
                if last <= first {
                    (0, Vec::new())
                } else {
                    (first, row[first..last].to_vec())
                }
            })
            .collect();
        Self { n_bins, rows }
    }

    pub fn n_filters(&self) -> usize {
        self.rows.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn weight(&self, filter: usize, bin: usize) -> f64 {
        let (start, w) = &self.rows[filter];
        if bin >= *start && bin < start + w.len() {
            w[bin - start]
        } else {
            0.0
        }
    }

    pub fn dense_row(&self, filter: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.n_bins];
        let (start, w) = &self.rows[filter];
        row[*start..start + w.len()].copy_from_slice(w);
        row
    }

    /// Filter responses for one power-spectrum frame.
    pub fn apply(&self, frame: &[f64], out: &mut [f64]) {
        debug_assert_eq!(frame.len(), self.n_bins);
        for ((start, w), o) in self.rows.iter().zip(out.iter_mut()) {
            *o = w.iter().zip(&frame[*start..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Triangular filters with peaks equally spaced on the mel scale between
/// 0 Hz and Nyquist, each with unit peak.
///
/// A filter too narrow to contain any FFT bin center is given unit weight on
/// the bin nearest its peak so that no row is empty.
pub fn mel_filterbank(fft_bins: usize, n_mels: usize, sample_rate: u32) -> Result<Filterbank> {
    if sample_rate == 0 {
        return Err(Error::Config("sample rate must be positive".into()));
    }
    if n_mels == 0 || n_mels > fft_bins {
        return Err(Error::Config(alloc::format!(
            "{n_mels} mel filters cannot be built over {fft_bins} FFT bins"
        )));
    }
    let nyquist = sample_rate as f64 / 2.0;
    let fft_len = 2 * (fft_bins - 1);
    let bin_hz = sample_rate as f64 / fft_len as f64;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut dense = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut row = vec![0.0; fft_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            *w = if f > lo && f <= center {
                (f - lo) / (center - lo)
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
        }
        if row.iter().all(|&w| w == 0.0) {
            let k = crate::math::round64(center / bin_hz) as usize;
            row[k.min(fft_bins - 1)] = 1.0;
        }
        dense.push(row);
    }
    Ok(Filterbank::from_dense(fft_bins, dense))
}
