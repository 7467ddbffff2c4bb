//! Multi-spectrogram acoustic scene classification.
//!
//! The crate covers the whole numerical path from raw audio to a scene label:
//!
//! - [`dsp`]: STFT, log-Mel, gammatone and constant-Q spectrograms, cut into
//!   aligned 128x128 patches.
//! - [`augment`]: mixup over patches (encoder stage) and over 256-d features
//!   (decoder stage).
//! - [`nn`]: a small tensor/layer/optimizer toolkit with hand-written
//!   backward passes and a finite-difference checker.
//! - [`encoder`]: the three-branch CNN encoder with sum/max/linear combiners.
//! - [`decoders`]: random forest regression, a dense classifier and a
//!   mixture of experts, all behind one train/predict interface.
//! - [`eval`]: segment aggregation, per-class/per-device reports, early
//!   classification curves and fold averaging.
//!
//! The crate is `no_std` + `alloc`. The default `std` feature enables runtime
//! SIMD detection in the matrix kernels; `parallel` adds rayon-based
//! concurrency across branches, trees and segments.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod augment;
pub mod checks;
pub mod decoders;
pub mod dsp;
pub mod encoder;
mod error;
pub mod eval;
mod math;
pub mod nn;
mod par;
pub mod stack;
pub mod synth;

pub use error::{Error, Result};

/// Dimension of every high-level feature vector exchanged between the
/// encoder, the combiner and the decoders.
pub const FEATURE_DIM: usize = 256;

/// Edge length of the square spectrogram patches fed to the encoder.
pub const PATCH_SIZE: usize = 128;
