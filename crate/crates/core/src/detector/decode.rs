//! Decode frame probabilities into timed events.

use serde::{Deserialize, Serialize};

use crate::annotation::{roll_to_events, FrameRoll, TechniqueEvent};
use crate::error::{Error, Result};

/// Decoding parameters: binarization threshold, optional odd-width median
/// filter (0 disables it), and the minimum kept event duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub threshold: f32,
    pub median_width_frames: usize,
    pub min_duration_s: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            threshold: 0.5,
            median_width_frames: 0,
            min_duration_s: 0.05,
        }
    }
}

/// Majority filter on a binary row with edge replication.
pub fn median_filter_binary(row: &mut [f32], width: usize) {
    if width <= 1 || row.is_empty() {
        return;
    }
    debug_assert!(width % 2 == 1);
    let half = (width / 2) as isize;
    let n = row.len() as isize;
    let src: Vec<f32> = row.to_vec();
    for (i, out) in row.iter_mut().enumerate() {
        let mut ones = 0usize;
        for d in -half..=half {
            let j = (i as isize + d).clamp(0, n - 1) as usize;
            if src[j] != 0.0 {
                ones += 1;
            }
        }
        *out = if 2 * ones > width { 1.0 } else { 0.0 };
    }
}

/// Binarize per class at `threshold` (strictly greater), optionally median
/// filter each class row, then extract events at least `min_duration_s`
/// long.
pub fn decode_events(probs: &FrameRoll, config: &DecodeConfig) -> Result<Vec<TechniqueEvent>> {
    if config.median_width_frames > 0 && config.median_width_frames % 2 == 0 {
        return Err(Error::Invalid(format!(
            "median width {} must be odd",
            config.median_width_frames
        )));
    }
    let mut binary = FrameRoll::zeros(probs.class_order.clone(), probs.num_frames, probs.hop_s);
    for c in 0..probs.num_classes() {
        let row = probs.row(c);
        let out =
            &mut binary.values[c * probs.num_frames..(c + 1) * probs.num_frames];
        for (o, &p) in out.iter_mut().zip(row) {
            *o = if p > config.threshold { 1.0 } else { 0.0 };
        }
        if config.median_width_frames > 0 {
            median_filter_binary(out, config.median_width_frames);
        }
    }
    Ok(roll_to_events(&binary, config.min_duration_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{rasterize, TechniqueClass, TechniqueEvent};

    fn probs_with_run(lo: f32, hi: f32) -> FrameRoll {
        let mut roll = FrameRoll::zeros(vec![TechniqueClass::Vibrato], 100, 0.01);
        for t in 0..100 {
            roll.set(0, t, if (10..20).contains(&t) { hi } else { lo });
        }
        roll
    }

    #[test]
    fn threshold_and_run_length() {
        let probs = probs_with_run(0.1, 0.9);
        let events = decode_events(&probs, &DecodeConfig::default()).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].class, TechniqueClass::Vibrato);
        assert!((events[0].onset_s - 0.10).abs() < 1e-12);
        assert!((events[0].offset_s - 0.20).abs() < 1e-12);
    }

    #[test]
    fn all_below_threshold_decodes_nothing() {
        let probs = probs_with_run(0.2, 0.4);
        assert!(decode_events(&probs, &DecodeConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn threshold_one_decodes_nothing() {
        let probs = probs_with_run(0.3, 1.0);
        let config = DecodeConfig {
            threshold: 1.0,
            ..DecodeConfig::default()
        };
        assert!(decode_events(&probs, &config).unwrap().is_empty());
    }

    #[test]
    fn median_filter_removes_isolated_frame() {
        let mut roll = FrameRoll::zeros(vec![TechniqueClass::Drop], 50, 0.01);
        roll.set(0, 25, 0.99);
        let config = DecodeConfig {
            threshold: 0.5,
            median_width_frames: 3,
            min_duration_s: 0.0,
        };
        assert!(decode_events(&roll, &config).unwrap().is_empty());
        // Without the filter the isolated frame survives.
        let config = DecodeConfig {
            median_width_frames: 0,
            min_duration_s: 0.0,
            ..config
        };
        assert_eq!(decode_events(&roll, &config).unwrap().len(), 1);
    }

    #[test]
    fn even_median_width_rejected() {
        let roll = FrameRoll::zeros(vec![TechniqueClass::Drop], 10, 0.01);
        let config = DecodeConfig {
            median_width_frames: 4,
            ..DecodeConfig::default()
        };
        assert!(decode_events(&roll, &config).is_err());
    }

    #[test]
    fn decode_inverts_rasterize_for_frame_aligned_events() {
        let events = vec![
            TechniqueEvent::new(TechniqueClass::Vibrato, 0.10, 0.30),
            TechniqueEvent::new(TechniqueClass::Drop, 0.50, 0.60),
        ];
        let order = vec![TechniqueClass::Vibrato, TechniqueClass::Drop];
        let roll = rasterize(&events, 100, 0.01, &order);
        let config = DecodeConfig {
            threshold: 0.5,
            median_width_frames: 0,
            min_duration_s: 0.05,
        };
        let mut decoded = decode_events(&roll, &config).unwrap();
        decoded.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
        assert_eq!(decoded.len(), 2);
        for (d, e) in decoded.iter().zip(&events) {
            assert_eq!(d.class, e.class);
            assert!((d.onset_s - e.onset_s).abs() < 1e-9);
            assert!((d.offset_s - e.offset_s).abs() < 1e-9);
        }
    }
}
