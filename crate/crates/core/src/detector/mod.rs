//! The CRNN detector: model assembly, clip segmentation, training with
//! early stopping, frame prediction, and event decoding.

mod clip;
mod decode;
mod model;
mod train;

pub use clip::{
    featurize_track, segment_clips, track_clips, Clip, Normalization, PitchSource,
};
pub use decode::{decode_events, median_filter_binary, DecodeConfig};
pub use model::{
    build_model, grad_check_crnn, predict_frames, predict_track, ConvLayerConfig, CrnnCache,
    CrnnGrads, CrnnParams, ModelConfig,
};
pub use train::{train, EpochStats, TrainConfig, TrainHistory, TrainOutcome};
