//! Three-branch encoder: one CNN per spectrogram kind, a dense head per
//! branch, a feature combiner and a classifier on the combined feature.

mod cnn;
mod combiner;
mod model;
mod train;

pub use cnn::{dnn2_specs, head_specs, CnnConfig};
pub use combiner::{combine, Combiner, CombinerKind, LIN_PARAM_NAMES};
pub use model::{Branch, EncoderConfig, EncoderModel, EncoderOutput, FeatureSource};
pub use train::{
    encoder_loss, extract_features, train_encoder, AlignedPatches, EncoderLoss, EncoderLossConfig, EncoderTrainConfig,
    epoch_seed, EpochLog, Extraction, HighLevelFeature, TrainingLog,
};
