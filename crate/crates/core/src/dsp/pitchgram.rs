//! Mel-band pitchgram: a binary time-frequency map of the melody.

use crate::annotation::PitchContour;
use crate::error::Result;

use super::mel::{hz_to_mel, MelFilterbank};
use super::DspConfig;

/// Binary `[n_mels x frames]` map with at most one active band per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Pitchgram {
    pub values: Vec<f32>,
    pub n_mels: usize,
    pub frames: usize,
}

impl Pitchgram {
    pub fn get(&self, band: usize, frame: usize) -> f32 {
        self.values[band * self.frames + frame]
    }

    pub fn active_band(&self, frame: usize) -> Option<usize> {
        (0..self.n_mels).find(|&b| self.get(b, frame) != 0.0)
    }
}

/// Rasterize a pitch contour onto the mel/frame grid.
///
/// A frame claims the contour point nearest its center `i * hop`, looking
/// half a hop to each side; a point exactly halfway between two centers
/// belongs to the earlier frame. The claimed point activates the mel band
/// whose center is nearest `hz_to_mel(f0)`, but only when its confidence
/// exceeds `confidence_min`; otherwise the column stays zero.
pub fn pitch_to_pitchgram(
    contour: &PitchContour,
    config: &DspConfig,
    frames: usize,
    confidence_min: f64,
) -> Result<Pitchgram> {
    let bank = MelFilterbank::new(config)?;
    let hop = config.hop_s;
    let half = hop / 2.0;
    let mut values = vec![0.0f32; config.n_mels * frames];
    let points = &contour.points;
    for t in 0..frames {
        let center = t as f64 * hop;
        // Qualifying window is (center - half, center + half].
        let lo = points.partition_point(|p| p.time_s <= center - half);
        let hi = points.partition_point(|p| p.time_s <= center + half);
        let mut best: Option<(f64, usize)> = None;
        for (i, p) in points[lo..hi].iter().enumerate() {
            let d = (p.time_s - center).abs();
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, lo + i));
            }
        }
        if let Some((_, idx)) = best {
            let p = &points[idx];
            if p.confidence > confidence_min {
                let band = bank.nearest_band(hz_to_mel(p.f0_hz)?);
                values[band * frames + t] = 1.0;
            }
        }
    }
    Ok(Pitchgram {
        values,
        n_mels: config.n_mels,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::PitchPoint;

    fn contour(points: &[(f64, f64, f64)]) -> PitchContour {
        PitchContour {
            points: points
                .iter()
                .map(|&(t, f, c)| PitchPoint {
                    time_s: t,
                    f0_hz: f,
                    confidence: c,
                })
                .collect(),
        }
    }

    #[test]
    fn empty_contour_all_zero() {
        let config = DspConfig::default();
        let pg = pitch_to_pitchgram(&PitchContour::default(), &config, 50, 0.5).unwrap();
        assert!(pg.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn halfway_point_lands_on_earlier_frame() {
        // 0.105 s is halfway between frame centers 0.10 and 0.11.
        let config = DspConfig::default();
        let c = contour(&[(0.105, 440.0, 0.9)]);
        let pg = pitch_to_pitchgram(&c, &config, 100, 0.5).unwrap();
        let bank = MelFilterbank::new(&config).unwrap();
        let band = bank.nearest_band(hz_to_mel(440.0).unwrap());
        for t in 0..100 {
            if t == 10 {
                assert_eq!(pg.active_band(t), Some(band));
            } else {
                assert_eq!(pg.active_band(t), None, "frame {t}");
            }
        }
    }

    #[test]
    fn low_confidence_gated_out() {
        let config = DspConfig::default();
        let c = contour(&[(0.10, 440.0, 0.4)]);
        let pg = pitch_to_pitchgram(&c, &config, 20, 0.5).unwrap();
        assert!(pg.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn confidence_exactly_at_threshold_gated_out() {
        let config = DspConfig::default();
        let c = contour(&[(0.10, 440.0, 0.5)]);
        let pg = pitch_to_pitchgram(&c, &config, 20, 0.5).unwrap();
        assert!(pg.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn columns_sum_to_at_most_one() {
        let config = DspConfig::default();
        let c = contour(&[
            (0.00, 220.0, 1.0),
            (0.01, 440.0, 1.0),
            (0.02, 880.0, 1.0),
            (0.03, 1760.0, 1.0),
        ]);
        let pg = pitch_to_pitchgram(&c, &config, 10, 0.5).unwrap();
        for t in 0..10 {
            let sum: f32 = (0..pg.n_mels).map(|b| pg.get(b, t)).sum();
            assert!(sum <= 1.0);
        }
    }
}
