//! Singing technique detection toolkit.
//!
//! The crate covers the full pipeline for frame-level detection of singing
//! techniques in vocal recordings:
//!
//! - [`annotation`]: technique labels, timed events, pitch contours, corpus
//!   loading, and interval/frame conversions.
//! - [`stats`]: descriptive corpus statistics (counts, durations, coverage,
//!   letter-value summaries, per-singer distributions).
//! - [`dsp`]: STFT, 64-band log-mel spectrograms, mel-band pitchgrams, and
//!   channel stacking with the standard parameters (44.1 kHz, Hann 2048,
//!   10 ms hop).
//! - [`nn`]: a small self-contained neural engine (conv2d, bidirectional GRU,
//!   linear/sigmoid, BCE and focal losses, Adam) with finite-difference
//!   gradient verification.
//! - [`detector`]: the CRNN detector, clip segmentation, training with early
//!   stopping, and event decoding.
//! - [`evaluation`]: segment-based detection metrics (50 ms segments,
//!   per-class P/R/F, macro-F, micro-F).
//! - [`experiment`]: singer-disjoint fold planning, synthetic corpus
//!   generation, and cross-validation over the loss x pitch condition grid.
//! - [`io`]: WAV reading/writing and the binary feature-cache and
//!   model-weights file formats.
//!
//! Data-parallel sections (featurization, batched gradients, fold runs) use
//! rayon when the `parallel` feature is enabled (the default) and fall back
//! to sequential loops otherwise. Results are bit-identical either way: all
//! reductions happen in a fixed order.

pub mod annotation;
pub mod detector;
pub mod dsp;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod io;
pub mod nn;
pub mod par;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
