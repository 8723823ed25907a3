//! Clip segmentation and per-track featurization.

use serde::{Deserialize, Serialize};

use crate::annotation::{rasterize, FrameRoll, TechniqueClass, TrackAnnotation};
use crate::dsp::{
    assemble_features, mel_spectrogram, pitch_to_pitchgram, DspConfig, FeatureTensor,
};
use crate::error::{Error, Result};
use crate::io::wav;

/// Which pitch contour (if any) feeds the second feature channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PitchSource {
    None,
    GroundTruth,
    Estimated,
}

impl PitchSource {
    pub fn channels(self) -> usize {
        match self {
            PitchSource::None => 1,
            _ => 2,
        }
    }
}

impl std::str::FromStr for PitchSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PitchSource::None),
            "gt" | "ground_truth" => Ok(PitchSource::GroundTruth),
            "est" | "estimated" => Ok(PitchSource::Estimated),
            other => Err(Error::Invalid(format!("unknown pitch source '{other}'"))),
        }
    }
}

/// One training example: a fixed-size window of features and binary targets.
/// Frames at and past `valid_frames` are zero padding and are excluded from
/// the loss and from evaluation.
#[derive(Debug, Clone)]
pub struct Clip {
    pub track_id: String,
    pub start_s: f64,
    pub features: FeatureTensor,
    pub targets: FrameRoll,
    pub valid_frames: usize,
}

/// Split a track's frame-aligned features and targets into consecutive
/// non-overlapping clips of `clip_len_s`. The final partial clip is
/// zero-padded up to the full clip length with `valid_frames` marking the
/// real extent.
pub fn segment_clips(
    track: &TrackAnnotation,
    features: &FeatureTensor,
    targets: &FrameRoll,
    clip_len_s: f64,
) -> Result<Vec<Clip>> {
    if features.frames != targets.num_frames {
        return Err(Error::Shape(format!(
            "features ({} frames) and targets ({}) differ",
            features.frames, targets.num_frames
        )));
    }
    let hop = targets.hop_s;
    if clip_len_s <= 0.0 {
        return Err(Error::Config(format!("clip_len_s {clip_len_s} <= 0")));
    }
    let clip_frames = (clip_len_s / hop).round() as usize + 1;
    let total = features.frames;
    let mut clips = Vec::new();
    let mut start = 0usize;
    while start < total {
        let len = clip_frames.min(total - start);
        let feat = features.slice_frames(start, len, clip_frames);
        let mut roll = FrameRoll::zeros(targets.class_order.clone(), clip_frames, hop);
        for c in 0..targets.num_classes() {
            for t in 0..len {
                roll.set(c, t, targets.get(c, start + t));
            }
        }
        clips.push(Clip {
            track_id: track.track_id.clone(),
            start_s: start as f64 * hop,
            features: feat,
            targets: roll,
            valid_frames: len,
        });
        start += clip_frames;
    }
    Ok(clips)
}

/// Featurize one track from its audio: log-mel plus the optional pitchgram
/// channel selected by `pitch_source`.
pub fn featurize_track(
    track: &TrackAnnotation,
    dsp: &DspConfig,
    pitch_source: PitchSource,
) -> Result<FeatureTensor> {
    let audio_path = track.audio_path.as_ref().ok_or_else(|| Error::Track {
        track_id: track.track_id.clone(),
        message: "track has no audio file".into(),
    })?;
    let (samples, info) = wav::read_mono(audio_path)?;
    let mel = mel_spectrogram(&samples, info.sample_rate, dsp)?;
    let frames = mel.frames;
    match pitch_source {
        PitchSource::None => assemble_features(&mel, None),
        PitchSource::GroundTruth => {
            let pg = pitch_to_pitchgram(&track.pitch, dsp, frames, 0.5)?;
            assemble_features(&mel, Some(&pg))
        }
        PitchSource::Estimated => {
            let contour = track.pitch_estimated.as_ref().ok_or_else(|| Error::Track {
                track_id: track.track_id.clone(),
                message: "track has no estimated pitch contour".into(),
            })?;
            let pg = pitch_to_pitchgram(contour, dsp, frames, 0.5)?;
            assemble_features(&mel, Some(&pg))
        }
    }
}

/// Featurize, rasterize targets, and segment one track into clips.
pub fn track_clips(
    track: &TrackAnnotation,
    dsp: &DspConfig,
    pitch_source: PitchSource,
    class_order: &[TechniqueClass],
    clip_len_s: f64,
) -> Result<Vec<Clip>> {
    let features = featurize_track(track, dsp, pitch_source)?;
    let targets = rasterize(&track.events, features.frames, dsp.hop_s, class_order);
    segment_clips(track, &features, &targets, clip_len_s)
}

/// Per-mel-bin standardization fitted on the training split. Only the
/// log-mel channel is touched; the binary pitchgram channel keeps its
/// 0/1 semantics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalization {
    pub fn identity(n_mels: usize) -> Self {
        Normalization {
            mean: vec![0.0; n_mels],
            std: vec![1.0; n_mels],
        }
    }

    /// Fit mean/std per mel bin over the valid frames of the given clips.
    pub fn fit(clips: &[Clip]) -> Result<Self> {
        let n_mels = clips
            .first()
            .map(|c| c.features.n_mels)
            .ok_or_else(|| Error::Invalid("cannot fit normalization on zero clips".into()))?;
        let mut sum = vec![0.0f64; n_mels];
        let mut sum_sq = vec![0.0f64; n_mels];
        let mut count = 0u64;
        for clip in clips {
            let frames = clip.features.frames;
            for m in 0..n_mels {
                for t in 0..clip.valid_frames {
                    let v = clip.features.values[m * frames + t] as f64;
                    sum[m] += v;
                    sum_sq[m] += v * v;
                }
            }
            count += clip.valid_frames as u64;
        }
        if count == 0 {
            return Err(Error::Invalid("no valid frames to fit normalization".into()));
        }
        let n = count as f64;
        let mut mean = vec![0.0f32; n_mels];
        let mut std = vec![0.0f32; n_mels];
        for m in 0..n_mels {
            let mu = sum[m] / n;
            let var = (sum_sq[m] / n - mu * mu).max(0.0);
            mean[m] = mu as f32;
            std[m] = (var.sqrt() as f32).max(1e-6);
        }
        Ok(Normalization { mean, std })
    }

    /// Standardize channel 0 in place.
    pub fn apply(&self, features: &mut FeatureTensor) {
        let frames = features.frames;
        for m in 0..features.n_mels {
            let mean = self.mean[m];
            let inv = 1.0 / self.std[m];
            for v in &mut features.values[m * frames..(m + 1) * frames] {
                *v = (*v - mean) * inv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{PitchContour, TechniqueEvent};

    fn track(duration: f64) -> TrackAnnotation {
        TrackAnnotation {
            track_id: "t".into(),
            singer_id: "s".into(),
            duration_s: duration,
            year: None,
            events: vec![TechniqueEvent::new(TechniqueClass::Vibrato, 9.9, 10.1)],
            pitch: PitchContour::default(),
            pitch_estimated: None,
            audio_path: None,
        }
    }

    fn features_of(frames: usize) -> FeatureTensor {
        FeatureTensor {
            channels: 1,
            n_mels: 4,
            frames,
            values: (0..4 * frames).map(|v| v as f32).collect(),
        }
    }

    fn targets_of(track: &TrackAnnotation, frames: usize) -> FrameRoll {
        rasterize(&track.events, frames, 0.01, &[TechniqueClass::Vibrato])
    }

    #[test]
    fn ten_second_track_single_full_clip() {
        let track = track(10.0);
        let features = features_of(1001);
        let targets = targets_of(&track, 1001);
        let clips = segment_clips(&track, &features, &targets, 10.0).unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].valid_frames, 1001);
        assert_eq!(clips[0].features.frames, 1001);
    }

    #[test]
    fn twenty_five_second_track_three_clips() {
        // 2501 global frames tile as 1001 + 1001 + 499.
        let track = track(25.0);
        let features = features_of(2501);
        let targets = targets_of(&track, 2501);
        let clips = segment_clips(&track, &features, &targets, 10.0).unwrap();
        assert_eq!(clips.len(), 3);
        assert_eq!(
            clips.iter().map(|c| c.valid_frames).collect::<Vec<_>>(),
            vec![1001, 1001, 499]
        );
        let total: usize = clips.iter().map(|c| c.valid_frames).sum();
        assert_eq!(total, 2501);
        // Padding beyond the valid region is zero.
        assert!(clips[2].features.values[(0) * 1001 + 499..1001]
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn boundary_event_appears_in_both_clips() {
        // Event [9.9, 10.1) with clip 0 covering frames 0..=1000: its tail
        // lands at the end of clip 0 and the rest at the head of clip 1.
        let track = track(25.0);
        let features = features_of(2501);
        let targets = targets_of(&track, 2501);
        let clips = segment_clips(&track, &features, &targets, 10.0).unwrap();
        let c0 = &clips[0];
        let c1 = &clips[1];
        assert_eq!(c0.targets.get(0, 990), 1.0);
        assert_eq!(c0.targets.get(0, 1000), 1.0);
        assert_eq!(c1.targets.get(0, 0), 1.0);
        assert_eq!(c1.targets.get(0, 8), 1.0);
        assert_eq!(c1.targets.get(0, 9), 0.0);
    }

    #[test]
    fn normalization_standardizes_channel_zero() {
        let track = track(10.0);
        let features = features_of(101);
        let targets = targets_of(&track, 101);
        let clips = segment_clips(&track, &features, &targets, 1.0).unwrap();
        let norm = Normalization::fit(&clips).unwrap();
        let mut f = features.clone();
        norm.apply(&mut f);
        // After standardization, per-bin mean over all frames is ~0.
        for m in 0..4 {
            let mean: f32 =
                f.values[m * 101..(m + 1) * 101].iter().sum::<f32>() / 101.0;
            assert!(mean.abs() < 1e-3, "bin {m} mean {mean}");
        }
    }

    #[test]
    fn normalization_leaves_pitch_channel_untouched() {
        let mut features = FeatureTensor {
            channels: 2,
            n_mels: 2,
            frames: 3,
            values: vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
        };
        let norm = Normalization {
            mean: vec![20.0, 50.0],
            std: vec![10.0, 10.0],
        };
        norm.apply(&mut features);
        assert_eq!(&features.values[6..], &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(features.values[0], -1.0);
    }
}
