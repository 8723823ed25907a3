//! Short-time Fourier transform with centered frames.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::{Error, Result};

use super::DspConfig;

/// Magnitude spectrogram, row-major `[bins x frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: usize,
    pub frames: usize,
    pub values: Vec<f32>,
}

impl Spectrogram {
    pub fn get(&self, bin: usize, frame: usize) -> f32 {
        self.values[bin * self.frames + frame]
    }

    /// Index of the strongest bin in one frame.
    pub fn argmax_bin(&self, frame: usize) -> usize {
        let mut best = 0;
        let mut best_v = f32::NEG_INFINITY;
        for b in 0..self.bins {
            let v = self.get(b, frame);
            if v > best_v {
                best_v = v;
                best = b;
            }
        }
        best
    }
}

/// Periodic Hann window of length `n`.
pub(crate) fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Reflected sample index for centered framing (mirror without repeating
/// the edge sample), valid for any signed index once the signal has at
/// least two samples.
fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

pub(crate) struct FramePlan {
    pub hop: usize,
    pub fft_size: usize,
    pub num_frames: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl FramePlan {
    pub fn new(config: &DspConfig, num_samples: usize) -> Result<Self> {
        config.validate()?;
        if num_samples == 0 {
            return Err(Error::Audio("empty signal".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(FramePlan {
            hop: config.hop_samples(),
            fft_size: config.fft_size,
            num_frames: config.num_frames(num_samples),
            window: hann_window(config.fft_size),
            fft: planner.plan_fft_forward(config.fft_size),
        })
    }

    /// Windowed FFT of the frame centered at `frame * hop`; writes the
    /// one-sided power spectrum (|X|^2) into `power`.
    pub fn frame_power(&self, samples: &[f32], frame: usize, power: &mut [f64]) {
        let n = samples.len();
        let half = self.fft_size / 2;
        let center = (frame * self.hop) as isize;
        let mut buf: Vec<Complex<f64>> = (0..self.fft_size)
            .map(|k| {
                let idx = center - half as isize + k as isize;
                let s = if idx >= 0 && (idx as usize) < n {
                    samples[idx as usize] as f64
                } else {
                    samples[reflect_index(idx, n)] as f64
                };
                Complex::new(s * self.window[k], 0.0)
            })
            .collect();
        self.fft.process(&mut buf);
        for (b, p) in power.iter_mut().enumerate().take(half + 1) {
            *p = buf[b].norm_sqr();
        }
    }
}

/// Magnitude STFT of a mono signal at the configured sample rate.
///
/// Frames are centered with reflection padding: `T = 1 + floor(N / hop)`.
pub fn stft_magnitude(
    samples: &[f32],
    sample_rate_hz: u32,
    config: &DspConfig,
) -> Result<Spectrogram> {
    if sample_rate_hz != config.sample_rate_hz {
        return Err(Error::Audio(format!(
            "sample rate {} does not match configured {} (no resampling)",
            sample_rate_hz, config.sample_rate_hz
        )));
    }
    let plan = FramePlan::new(config, samples.len())?;
    let bins = config.num_bins();
    let frames = plan.num_frames;
    let mut values = vec![0.0f32; bins * frames];
    let mut power = vec![0.0f64; bins];
    for t in 0..frames {
        plan.frame_power(samples, t, &mut power);
        for b in 0..bins {
            values[b * frames + t] = power[b].sqrt() as f32;
        }
    }
    Ok(Spectrogram {
        bins,
        frames,
        values,
    })
}
