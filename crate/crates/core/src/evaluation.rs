//! Segment-based detection metrics.
//!
//! Time is discretized into fixed-length segments (50 ms by default); a
//! class is active in a segment iff one of its events overlaps it with
//! positive length. Confusion counts pool over segments and tracks before
//! metrics are derived. Any metric with a zero denominator reports 0.

use serde::{Deserialize, Serialize};

use crate::annotation::{rasterize, FrameRoll, TechniqueClass, TechniqueEvent};
use crate::error::{Error, Result};

pub const DEFAULT_SEGMENT_LEN_S: f64 = 0.05;

/// Per-class segment confusion counts, pooled over everything scored so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentScores {
    pub class_order: Vec<TechniqueClass>,
    pub segment_len_s: f64,
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl SegmentScores {
    pub fn zeros(class_order: Vec<TechniqueClass>, segment_len_s: f64) -> Self {
        let n = class_order.len();
        SegmentScores {
            class_order,
            segment_len_s,
            tp: vec![0; n],
            fp: vec![0; n],
            fn_: vec![0; n],
        }
    }

    /// Pool another score set into this one (counts are associative sums).
    pub fn merge(&mut self, other: &SegmentScores) -> Result<()> {
        if self.class_order != other.class_order {
            return Err(Error::Shape("merging scores with different classes".into()));
        }
        for i in 0..self.tp.len() {
            self.tp[i] += other.tp[i];
            self.fp[i] += other.fp[i];
            self.fn_[i] += other.fn_[i];
        }
        Ok(())
    }
}

/// Binary `[classes x segments]` activity of an event list over
/// `ceil(duration / segment_len)` segments.
pub fn segment_activity(
    events: &[TechniqueEvent],
    duration_s: f64,
    segment_len_s: f64,
    class_order: &[TechniqueClass],
) -> FrameRoll {
    assert!(segment_len_s > 0.0);
    let segments = (duration_s / segment_len_s).ceil() as usize;
    rasterize(events, segments, segment_len_s, class_order)
}

/// Per-class TP/FP/FN between reference and predicted activity matrices.
pub fn score_segments(reference: &FrameRoll, predicted: &FrameRoll) -> Result<SegmentScores> {
    if reference.class_order != predicted.class_order
        || reference.num_frames != predicted.num_frames
    {
        return Err(Error::Shape(format!(
            "activity shapes differ: ref {}x{}, pred {}x{}",
            reference.num_classes(),
            reference.num_frames,
            predicted.num_classes(),
            predicted.num_frames
        )));
    }
    let mut scores = SegmentScores::zeros(reference.class_order.clone(), reference.hop_s);
    for c in 0..reference.num_classes() {
        let r = reference.row(c);
        let p = predicted.row(c);
        for s in 0..reference.num_frames {
            match (r[s] != 0.0, p[s] != 0.0) {
                (true, true) => scores.tp[c] += 1,
                (false, true) => scores.fp[c] += 1,
                (true, false) => scores.fn_[c] += 1,
                (false, false) => {}
            }
        }
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: TechniqueClass,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Derived metrics: per-class P/R/F plus macro and micro averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_f: f64,
    pub micro_f: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    /// Unweighted means of the per-class precision/recall columns.
    pub macro_precision: f64,
    pub macro_recall: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Derive P/R/F per class and the macro/micro averages from pooled counts.
pub fn aggregate(scores: &SegmentScores) -> MetricsReport {
    let mut per_class = Vec::with_capacity(scores.class_order.len());
    for (i, &class) in scores.class_order.iter().enumerate() {
        let (tp, fp, fn_) = (scores.tp[i], scores.fp[i], scores.fn_[i]);
        per_class.push(ClassMetrics {
            class,
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f_measure: ratio(2 * tp, 2 * tp + fp + fn_),
        });
    }
    let n = per_class.len().max(1) as f64;
    let macro_f = per_class.iter().map(|c| c.f_measure).sum::<f64>() / n;
    let macro_precision = per_class.iter().map(|c| c.precision).sum::<f64>() / n;
    let macro_recall = per_class.iter().map(|c| c.recall).sum::<f64>() / n;
    let tp: u64 = scores.tp.iter().sum();
    let fp: u64 = scores.fp.iter().sum();
    let fn_: u64 = scores.fn_.iter().sum();
    MetricsReport {
        per_class,
        macro_f,
        micro_f: ratio(2 * tp, 2 * tp + fp + fn_),
        micro_precision: ratio(tp, tp + fp),
        micro_recall: ratio(tp, tp + fn_),
        macro_precision,
        macro_recall,
    }
}

/// Fixed-order text table of per-class precision/recall/F.
pub fn classwise_report(scores: &SegmentScores) -> String {
    let report = aggregate(scores);
    let mut out = format!(
        "{:<14}{:>10}{:>10}{:>10}{:>8}{:>8}{:>8}\n",
        "class", "tp", "fp", "fn", "P", "R", "F"
    );
    for c in &report.per_class {
        out.push_str(&format!(
            "{:<14}{:>10}{:>10}{:>10}{:>8.3}{:>8.3}{:>8.3}\n",
            c.class.name(),
            c.tp,
            c.fp,
            c.fn_,
            c.precision,
            c.recall,
            c.f_measure
        ));
    }
    out.push_str(&format!(
        "macro-F {:.4}  micro-F {:.4}  micro-P {:.4}  micro-R {:.4}\n",
        report.macro_f, report.micro_f, report.micro_precision, report.micro_recall
    ));
    out
}

/// CSV of per-class metrics plus the averaged rows.
pub fn metrics_csv(report: &MetricsReport) -> String {
    let mut out = String::from("class,tp,fp,fn,precision,recall,f_measure\n");
    for c in &report.per_class {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.class, c.tp, c.fp, c.fn_, c.precision, c.recall, c.f_measure
        ));
    }
    out.push_str(&format!(
        "macro,,,,{},{},{}\n",
        report.macro_precision, report.macro_recall, report.macro_f
    ));
    out.push_str(&format!(
        "micro,,,,{},{},{}\n",
        report.micro_precision, report.micro_recall, report.micro_f
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(class: TechniqueClass, on: f64, off: f64) -> TechniqueEvent {
        TechniqueEvent::new(class, on, off)
    }

    #[test]
    fn one_second_event_covers_twenty_segments() {
        let order = vec![TechniqueClass::Vibrato];
        let act = segment_activity(&[ev(TechniqueClass::Vibrato, 0.0, 1.0)], 2.0, 0.05, &order);
        assert_eq!(act.num_frames, 40);
        for s in 0..40 {
            assert_eq!(act.get(0, s) == 1.0, s < 20, "segment {s}");
        }
    }

    #[test]
    fn empty_events_all_zero() {
        let act = segment_activity(&[], 1.0, 0.05, &[TechniqueClass::Drop]);
        assert!(act.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn straddling_event_marks_both_segments() {
        let order = vec![TechniqueClass::Bend];
        let act = segment_activity(&[ev(TechniqueClass::Bend, 0.049, 0.051)], 0.2, 0.05, &order);
        assert_eq!(act.get(0, 0), 1.0);
        assert_eq!(act.get(0, 1), 1.0);
        assert_eq!(act.get(0, 2), 0.0);
    }

    #[test]
    fn final_partial_segment_included() {
        let order = vec![TechniqueClass::Bend];
        let act = segment_activity(&[ev(TechniqueClass::Bend, 0.1, 0.12)], 0.12, 0.05, &order);
        assert_eq!(act.num_frames, 3);
        assert_eq!(act.get(0, 2), 1.0);
    }

    #[test]
    fn perfect_match_scores() {
        let order = vec![TechniqueClass::Vibrato];
        let reference =
            segment_activity(&[ev(TechniqueClass::Vibrato, 0.0, 1.0)], 2.0, 0.05, &order);
        let scores = score_segments(&reference, &reference).unwrap();
        assert_eq!(scores.tp[0], 20);
        assert_eq!(scores.fp[0], 0);
        assert_eq!(scores.fn_[0], 0);
        let report = aggregate(&scores);
        assert_eq!(report.per_class[0].f_measure, 1.0);
        assert_eq!(report.macro_f, 1.0);
    }

    #[test]
    fn half_overlap_fixture() {
        // ref 0..1 s, pred 0.5..1.5 s at 50 ms: TP=10, FP=10, FN=10.
        let order = vec![TechniqueClass::Vibrato];
        let reference =
            segment_activity(&[ev(TechniqueClass::Vibrato, 0.0, 1.0)], 2.0, 0.05, &order);
        let predicted =
            segment_activity(&[ev(TechniqueClass::Vibrato, 0.5, 1.5)], 2.0, 0.05, &order);
        let scores = score_segments(&reference, &predicted).unwrap();
        assert_eq!((scores.tp[0], scores.fp[0], scores.fn_[0]), (10, 10, 10));
        let report = aggregate(&scores);
        assert_eq!(report.per_class[0].precision, 0.5);
        assert_eq!(report.per_class[0].recall, 0.5);
        assert_eq!(report.per_class[0].f_measure, 0.5);
    }

    #[test]
    fn empty_prediction_convention() {
        let order = vec![TechniqueClass::Vibrato];
        let reference =
            segment_activity(&[ev(TechniqueClass::Vibrato, 0.0, 1.0)], 1.0, 0.05, &order);
        let predicted = segment_activity(&[], 1.0, 0.05, &order);
        let scores = score_segments(&reference, &predicted).unwrap();
        let report = aggregate(&scores);
        assert_eq!(scores.tp[0], 0);
        assert_eq!(report.per_class[0].precision, 0.0);
        assert_eq!(report.per_class[0].f_measure, 0.0);
    }

    #[test]
    fn macro_micro_worked_example() {
        // class A: TP=10 only; class B: FN=10 only.
        let mut scores = SegmentScores::zeros(
            vec![TechniqueClass::Vibrato, TechniqueClass::Drop],
            0.05,
        );
        scores.tp[0] = 10;
        scores.fn_[1] = 10;
        let report = aggregate(&scores);
        assert_eq!(report.per_class[0].f_measure, 1.0);
        assert_eq!(report.per_class[1].f_measure, 0.0);
        assert_eq!(report.macro_f, 0.5);
        assert!((report.micro_f - 20.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_counts_all_zero_metrics() {
        let scores = SegmentScores::zeros(vec![TechniqueClass::Vibrato], 0.05);
        let report = aggregate(&scores);
        assert_eq!(report.macro_f, 0.0);
        assert_eq!(report.micro_f, 0.0);
        assert_eq!(report.micro_precision, 0.0);
    }

    #[test]
    fn single_class_macro_equals_micro() {
        let mut scores = SegmentScores::zeros(vec![TechniqueClass::Vibrato], 0.05);
        scores.tp[0] = 7;
        scores.fp[0] = 3;
        scores.fn_[0] = 2;
        let report = aggregate(&scores);
        assert_eq!(report.macro_f, report.micro_f);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = FrameRoll::zeros(vec![TechniqueClass::Vibrato], 10, 0.05);
        let b = FrameRoll::zeros(vec![TechniqueClass::Vibrato], 11, 0.05);
        assert!(score_segments(&a, &b).is_err());
    }

    #[test]
    fn split_event_invariance() {
        // Splitting one event into two abutting halves leaves activity
        // unchanged, hence identical metrics.
        let order = vec![TechniqueClass::Vibrato];
        let whole = segment_activity(&[ev(TechniqueClass::Vibrato, 0.1, 0.9)], 1.0, 0.05, &order);
        let split = segment_activity(
            &[
                ev(TechniqueClass::Vibrato, 0.1, 0.5),
                ev(TechniqueClass::Vibrato, 0.5, 0.9),
            ],
            1.0,
            0.05,
            &order,
        );
        assert_eq!(whole, split);
    }

    #[test]
    fn merge_pools_counts() {
        let order = vec![TechniqueClass::Vibrato];
        let reference =
            segment_activity(&[ev(TechniqueClass::Vibrato, 0.0, 0.5)], 1.0, 0.05, &order);
        let predicted = segment_activity(&[], 1.0, 0.05, &order);
        let s1 = score_segments(&reference, &predicted).unwrap();
        let mut pooled = SegmentScores::zeros(order.clone(), 0.05);
        pooled.merge(&s1).unwrap();
        pooled.merge(&s1).unwrap();
        assert_eq!(pooled.fn_[0], 20);
    }
}
