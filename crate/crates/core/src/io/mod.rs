//! File formats: WAV audio, binary feature caches, and model weights.

pub mod feature_cache;
pub mod wav;
pub mod weights;
