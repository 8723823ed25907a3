//! Feature front-end: STFT, log-mel spectrogram, mel-band pitchgram.
//!
//! Defaults match the detection setup: 44.1 kHz input, Hann window of 2048
//! samples, 10 ms hop, 64 mel bands over 0..22050 Hz. Framing is centered
//! with reflection padding, so a signal of `N` samples yields
//! `1 + floor(N / hop)` frames and frame `i` is centered at `i * hop`.

mod mel;
mod pitchgram;
mod stft;

pub use mel::{hz_to_mel, mel_to_hz, mel_spectrogram, MelFilterbank, MelSpec};
pub use pitchgram::{pitch_to_pitchgram, Pitchgram};
pub use stft::{stft_magnitude, Spectrogram};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Front-end parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    pub sample_rate_hz: u32,
    pub fft_size: usize,
    pub hop_s: f64,
    pub n_mels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    /// Additive power floor applied before the log.
    pub log_floor: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            sample_rate_hz: 44100,
            fft_size: 2048,
            hop_s: 0.010,
            n_mels: 64,
            fmin_hz: 0.0,
            fmax_hz: 22050.0,
            log_floor: 1e-10,
        }
    }
}

impl DspConfig {
    pub fn hop_samples(&self) -> usize {
        (self.hop_s * self.sample_rate_hz as f64).round() as usize
    }

    /// Frames produced for a signal of `num_samples` under centered framing.
    pub fn num_frames(&self, num_samples: usize) -> usize {
        1 + num_samples / self.hop_samples()
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_samples() == 0 {
            return Err(Error::Config("hop rounds to zero samples".into()));
        }
        if self.fft_size == 0 || !self.fft_size.is_multiple_of(2) {
            return Err(Error::Config(format!("bad fft_size {}", self.fft_size)));
        }
        if !(self.fmin_hz >= 0.0
            && self.fmin_hz < self.fmax_hz
            && self.fmax_hz <= self.sample_rate_hz as f64 / 2.0)
        {
            return Err(Error::Config(format!(
                "mel range [{}, {}] invalid for sample rate {}",
                self.fmin_hz, self.fmax_hz, self.sample_rate_hz
            )));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be positive".into()));
        }
        Ok(())
    }
}

/// Channel-stacked input features: channel 0 is the log-mel spectrogram,
/// channel 1 (when present) the binary pitchgram.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub channels: usize,
    pub n_mels: usize,
    pub frames: usize,
    /// Row-major `[channels x n_mels x frames]`.
    pub values: Vec<f32>,
}

impl FeatureTensor {
    pub fn get(&self, c: usize, m: usize, t: usize) -> f32 {
        self.values[(c * self.n_mels + m) * self.frames + t]
    }

    /// Copy of the tensor restricted to frames `[start, start+len)`,
    /// zero-padded on the right up to `padded_len`.
    pub fn slice_frames(&self, start: usize, len: usize, padded_len: usize) -> FeatureTensor {
        assert!(start + len <= self.frames && len <= padded_len);
        let mut values = vec![0.0; self.channels * self.n_mels * padded_len];
        for c in 0..self.channels {
            for m in 0..self.n_mels {
                let src = (c * self.n_mels + m) * self.frames + start;
                let dst = (c * self.n_mels + m) * padded_len;
                values[dst..dst + len].copy_from_slice(&self.values[src..src + len]);
            }
        }
        FeatureTensor {
            channels: self.channels,
            n_mels: self.n_mels,
            frames: padded_len,
            values,
        }
    }
}

/// Stack log-mel and (optionally) a pitchgram along the channel axis.
pub fn assemble_features(mel: &MelSpec, pitchgram: Option<&Pitchgram>) -> Result<FeatureTensor> {
    let n_mels = mel.config.n_mels;
    let frames = mel.frames;
    let channels = if pitchgram.is_some() { 2 } else { 1 };
    if let Some(pg) = pitchgram {
        if pg.n_mels != n_mels || pg.frames != frames {
            return Err(Error::Shape(format!(
                "pitchgram {}x{} does not match mel {}x{}",
                pg.n_mels, pg.frames, n_mels, frames
            )));
        }
    }
    let mut values = Vec::with_capacity(channels * n_mels * frames);
    values.extend_from_slice(&mel.values);
    if let Some(pg) = pitchgram {
        values.extend_from_slice(&pg.values);
    }
    Ok(FeatureTensor {
        channels,
        n_mels,
        frames,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let c = DspConfig::default();
        c.validate().unwrap();
        assert_eq!(c.hop_samples(), 441);
        assert_eq!(c.num_bins(), 1025);
        assert_eq!(c.num_frames(441_000), 1001);
    }

    #[test]
    fn assemble_shapes() {
        let config = DspConfig::default();
        let mel = MelSpec {
            values: vec![0.0; 64 * 10],
            frames: 10,
            config: config.clone(),
        };
        let pg = Pitchgram {
            values: vec![0.0; 64 * 10],
            n_mels: 64,
            frames: 10,
        };
        let f1 = assemble_features(&mel, None).unwrap();
        assert_eq!((f1.channels, f1.n_mels, f1.frames), (1, 64, 10));
        let f2 = assemble_features(&mel, Some(&pg)).unwrap();
        assert_eq!((f2.channels, f2.n_mels, f2.frames), (2, 64, 10));

        let bad = Pitchgram {
            values: vec![0.0; 64 * 9],
            n_mels: 64,
            frames: 9,
        };
        assert!(assemble_features(&mel, Some(&bad)).is_err());
    }

    #[test]
    fn slice_frames_pads_with_zeros() {
        let t = FeatureTensor {
            channels: 1,
            n_mels: 2,
            frames: 5,
            values: (0..10).map(|v| v as f32).collect(),
        };
        let s = t.slice_frames(3, 2, 4);
        assert_eq!(s.frames, 4);
        assert_eq!(s.get(0, 0, 0), 3.0);
        assert_eq!(s.get(0, 0, 1), 4.0);
        assert_eq!(s.get(0, 0, 2), 0.0);
        assert_eq!(s.get(0, 1, 1), 9.0);
    }
}
