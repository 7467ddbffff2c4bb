//! Time-frequency front-ends.
//!
//! All three spectrogram kinds share one frame grid: frame `t` is anchored at
//! sample `t * hop` and spans one analysis window, so for a given segment and
//! configuration they always agree on the number of frames and, after
//! [`split_patches`], on the number of patches.

mod audio;
mod config;
mod cqt;
pub mod fft;
mod gammatone;
mod mel;
mod patch;
mod spectrogram;
mod stft;

pub use audio::AudioSegment;
pub use config::{SpectrogramConfig, SpectrogramKind};
pub use cqt::ConstantQ;
pub use gammatone::{erb, erb_rate, erb_rate_to_hz, GammatoneFilterbank};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, Filterbank};
pub use patch::{split_patches, Patch, PatchKey, PatchSet};
pub use spectrogram::{
    cqt_spectrogram, gammatone_spectrogram, log_mel_spectrogram, Frontend, Spectrogram, ZScore,
};
pub use stft::{stft, PowerSpectrum, Stft};
