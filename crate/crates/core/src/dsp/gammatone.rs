use alloc::vec::Vec;

use super::mel::Filterbank;
use crate::math::{log10_64, pow64};
use crate::{Error, Result};

/// Equivalent rectangular bandwidth in Hz at `hz`.
pub fn erb(hz: f64) -> f64 {
    24.7 * (4.37 * hz / 1000.0 + 1.0)
}

/// Position on the ERB-rate scale.
pub fn erb_rate(hz: f64) -> f64 {
    21.4 * log10_64(4.37 * hz / 1000.0 + 1.0)
}

pub fn erb_rate_to_hz(rate: f64) -> f64 {
    (pow64(10.0, rate / 21.4) - 1.0) * 1000.0 / 4.37
}

/// Lowest channel center frequency.
pub const GAMMATONE_FMIN: f64 = 50.0;

/// Bandwidth scale applied to the ERB for a 4th-order filter.
pub const BANDWIDTH_SCALE: f64 = 1.019;

/// Weights below this fraction of the unit peak are dropped.
const WEIGHT_CUTOFF: f64 = 1e-7;

/// Spectral weighting built from gammatone filter magnitude responses.
///
/// The impulse response `t^(P-1) exp(-2 pi b t) cos(2 pi f t + theta)` has,
/// around its center, the magnitude response `(1 + ((x - f) / b)^2)^(-P/2)`.
/// That response (unit peak) is sampled at every FFT bin center.
#[derive(Debug, Clone)]
pub struct GammatoneFilterbank {
    pub order: u32,
    pub centers: Vec<f64>,
    pub bandwidths: Vec<f64>,
    pub phase: f64,
    weights: Filterbank,
}

impl GammatoneFilterbank {
    pub fn new(n_channels: usize, fft_bins: usize, sample_rate: u32) -> Result<Self> {
        Self::with_order(n_channels, fft_bins, sample_rate, 4)
    }

    pub fn with_order(
        n_channels: usize,
        fft_bins: usize,
        sample_rate: u32,
        order: u32,
    ) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if n_channels < 2 || fft_bins < 2 || order == 0 {
            return Err(Error::Config("gammatone bank needs >= 2 channels and bins".into()));
        }
        if nyquist <= GAMMATONE_FMIN {
            return Err(Error::Config(alloc::format!(
                "sample rate {sample_rate} Hz leaves no band above {GAMMATONE_FMIN} Hz"
            )));
        }
        let (lo, hi) = (erb_rate(GAMMATONE_FMIN), erb_rate(nyquist));
        let centers: Vec<f64> = (0..n_channels)
            .map(|j| erb_rate_to_hz(lo + (hi - lo) * j as f64 / (n_channels - 1) as f64))
            .collect();
        let bandwidths: Vec<f64> = centers.iter().map(|&f| BANDWIDTH_SCALE * erb(f)).collect();

        let bin_hz = nyquist / (fft_bins - 1) as f64;
        let dense = centers
            .iter()
            .zip(&bandwidths)
            .map(|(&fc, &b)| {
                (0..fft_bins)
                    .map(|k| {
                        let x = (k as f64 * bin_hz - fc) / b;
                        let w = pow64(1.0 + x * x, -(order as f64) / 2.0);
                        if w < WEIGHT_CUTOFF {
                            0.0
                        } else {
                            w
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            order,
            centers,
            bandwidths,
            phase: 0.0,
            weights: Filterbank::from_dense(fft_bins, dense),
        })
    }

    pub fn weights(&self) -> &Filterbank {
        &self.weights
    }

    pub fn n_channels(&self) -> usize {
        self.centers.len()
    }
}
