//! Mel scale conversion, triangular filterbank, and log-mel spectrogram.

use crate::error::{Error, Result};

use super::stft::FramePlan;
use super::DspConfig;

/// HTK mel scale: `m = 2595 * log10(1 + f / 700)`.
pub fn hz_to_mel(f_hz: f64) -> Result<f64> {
    if f_hz < 0.0 {
        return Err(Error::Invalid(format!("negative frequency {f_hz}")));
    }
    Ok(2595.0 * (1.0 + f_hz / 700.0).log10())
}

/// Inverse of [`hz_to_mel`].
pub fn mel_to_hz(mel: f64) -> Result<f64> {
    if mel < 0.0 {
        return Err(Error::Invalid(format!("negative mel {mel}")));
    }
    Ok(700.0 * (10.0f64.powf(mel / 2595.0) - 1.0))
}

/// Triangular mel filterbank with peak-1 (unnormalized) filters whose edges
/// are equally spaced on the mel axis between `fmin` and `fmax`.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    /// Band centers on the mel axis, one per filter.
    pub centers_mel: Vec<f64>,
    /// Per filter: first nonzero bin and the weights from there on.
    rows: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    pub fn new(config: &DspConfig) -> Result<Self> {
        config.validate()?;
        let n_mels = config.n_mels;
        let n_bins = config.num_bins();
        let mel_lo = hz_to_mel(config.fmin_hz)?;
        let mel_hi = hz_to_mel(config.fmax_hz)?;
        // n_mels + 2 equally spaced edge points; filter k spans edges
        // k .. k+2 and peaks at edge k+1.
        let edges_hz: Vec<f64> = (0..n_mels + 2)
            .map(|k| {
                let mel = mel_lo + (mel_hi - mel_lo) * k as f64 / (n_mels + 1) as f64;
                mel_to_hz(mel).expect("edge mel is non-negative")
            })
            .collect();
        let bin_hz = config.sample_rate_hz as f64 / config.fft_size as f64;

        let mut rows = Vec::with_capacity(n_mels);
        for k in 0..n_mels {
            let (left, center, right) = (edges_hz[k], edges_hz[k + 1], edges_hz[k + 2]);
            let mut start = None;
            let mut weights = Vec::new();
            for b in 0..n_bins {
                let f = b as f64 * bin_hz;
                let up = if center > left {
                    (f - left) / (center - left)
                } else {
                    0.0
                };
                let down = if right > center {
                    (right - f) / (right - center)
                } else {
                    0.0
                };
                let w = up.min(down).max(0.0);
                if w > 0.0 {
                    if start.is_none() {
                        start = Some(b);
                    }
                    weights.push(w);
                } else if start.is_some() {
                    break;
                }
            }
            rows.push((start.unwrap_or(0), weights));
        }
        let centers_mel = (1..=n_mels)
            .map(|k| mel_lo + (mel_hi - mel_lo) * k as f64 / (n_mels + 1) as f64)
            .collect();
        Ok(MelFilterbank {
            n_mels,
            n_bins,
            centers_mel,
            rows,
        })
    }

    /// Weight of filter `k` at FFT bin `b`.
    pub fn weight(&self, k: usize, b: usize) -> f64 {
        let (start, ref w) = self.rows[k];
        if b >= start && b < start + w.len() {
            w[b - start]
        } else {
            0.0
        }
    }

    /// Apply the bank to a one-sided power spectrum.
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        debug_assert_eq!(power.len(), self.n_bins);
        for (k, (start, weights)) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for (w, p) in weights.iter().zip(&power[*start..]) {
                acc += w * p;
            }
            out[k] = acc;
        }
    }

    /// Index of the band whose mel center is nearest to `mel`; earlier band
    /// on exact ties.
    pub fn nearest_band(&self, mel: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, &c) in self.centers_mel.iter().enumerate() {
            let d = (c - mel).abs();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }
}

/// Log-power mel spectrogram, row-major `[n_mels x frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpec {
    pub values: Vec<f32>,
    pub frames: usize,
    pub config: DspConfig,
}

impl MelSpec {
    pub fn get(&self, band: usize, frame: usize) -> f32 {
        self.values[band * self.frames + frame]
    }

    pub fn argmax_band(&self, frame: usize) -> usize {
        let mut best = 0;
        let mut best_v = f32::NEG_INFINITY;
        for b in 0..self.config.n_mels {
            let v = self.get(b, frame);
            if v > best_v {
                best_v = v;
                best = b;
            }
        }
        best
    }
}

/// 64-band log-mel spectrogram: `log(filterbank(|stft|^2) + floor)`.
pub fn mel_spectrogram(
    samples: &[f32],
    sample_rate_hz: u32,
    config: &DspConfig,
) -> Result<MelSpec> {
    if sample_rate_hz != config.sample_rate_hz {
        return Err(Error::Audio(format!(
            "sample rate {} does not match configured {} (no resampling)",
            sample_rate_hz, config.sample_rate_hz
        )));
    }
    let bank = MelFilterbank::new(config)?;
    let plan = FramePlan::new(config, samples.len())?;
    let frames = plan.num_frames;
    let mut values = vec![0.0f32; config.n_mels * frames];
    let mut power = vec![0.0f64; config.num_bins()];
    let mut mel = vec![0.0f64; config.n_mels];
    for t in 0..frames {
        plan.frame_power(samples, t, &mut power);
        bank.apply(&power, &mut mel);
        for (k, &m) in mel.iter().enumerate() {
            values[k * frames + t] = (m + config.log_floor).ln() as f32;
        }
    }
    Ok(MelSpec {
        values,
        frames,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_reference_points() {
        assert_eq!(hz_to_mel(0.0).unwrap(), 0.0);
        assert!((hz_to_mel(700.0).unwrap() - 781.17).abs() < 0.01);
        assert!((hz_to_mel(1000.0).unwrap() - 999.99).abs() < 0.01);
        assert!(hz_to_mel(-1.0).is_err());
    }

    #[test]
    fn mel_round_trip() {
        for i in 1..=100 {
            let f = 22050.0 * i as f64 / 100.0;
            let back = mel_to_hz(hz_to_mel(f).unwrap()).unwrap();
            assert!((back - f).abs() / f < 1e-6, "{f} -> {back}");
        }
    }

    #[test]
    fn filterbank_rows_have_triangular_support() {
        let config = DspConfig::default();
        let bank = MelFilterbank::new(&config).unwrap();
        let mel_hi = hz_to_mel(config.fmax_hz).unwrap();
        let bin_hz = config.sample_rate_hz as f64 / config.fft_size as f64;
        for k in 0..bank.n_mels {
            let lo_mel = mel_hi * k as f64 / 65.0;
            let hi_mel = mel_hi * (k + 2) as f64 / 65.0;
            let lo_hz = mel_to_hz(lo_mel).unwrap();
            let hi_hz = mel_to_hz(hi_mel).unwrap();
            for b in 0..bank.n_bins {
                let f = b as f64 * bin_hz;
                let w = bank.weight(k, b);
                assert!(w >= 0.0);
                if w > 0.0 {
                    assert!(f > lo_hz && f < hi_hz, "band {k} bin {b} outside support");
                }
            }
        }
    }

    #[test]
    fn every_interior_bin_covered() {
        let config = DspConfig::default();
        let bank = MelFilterbank::new(&config).unwrap();
        for b in 1..bank.n_bins - 1 {
            let covered = (0..bank.n_mels).any(|k| bank.weight(k, b) > 0.0);
            assert!(covered, "bin {b} uncovered");
        }
    }

    #[test]
    fn zero_signal_hits_log_floor() {
        let config = DspConfig::default();
        let mel = mel_spectrogram(&vec![0.0; 44_100], 44100, &config).unwrap();
        let floor = (config.log_floor).ln() as f32;
        assert!(mel.values.iter().all(|&v| v == floor));
    }

    #[test]
    fn sine_440_peaks_at_nearest_band() {
        let config = DspConfig::default();
        let bank = MelFilterbank::new(&config).unwrap();
        let expect = bank.nearest_band(hz_to_mel(440.0).unwrap());
        let samples: Vec<f32> = (0..44_100)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 44100.0).sin() as f32)
            .collect();
        let mel = mel_spectrogram(&samples, 44100, &config).unwrap();
        for t in 0..mel.frames {
            assert_eq!(mel.argmax_band(t), expect, "frame {t}");
        }
    }
}
