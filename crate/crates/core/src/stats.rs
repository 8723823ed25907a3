//! Descriptive corpus statistics: per-class counts and durations,
//! letter-value summaries, per-singer distributions, and coverage ratios.

use serde::{Deserialize, Serialize};

use crate::annotation::{Corpus, TechniqueClass, VOCABULARY};
use crate::error::{Error, Result};

/// Interpolation-free letter-value summary of a sample: min/max plus the
/// median, fourths, and eighths taken at rank `floor(depth)` from each end
/// (the lower median of even splits).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LetterValues {
    pub min: f64,
    pub lower_eighth: f64,
    pub lower_fourth: f64,
    pub median: f64,
    pub upper_fourth: f64,
    pub upper_eighth: f64,
    pub max: f64,
}

fn letter_values(sorted: &[f64]) -> LetterValues {
    let n = sorted.len();
    debug_assert!(n > 0);
    // Tukey depths: d(M) = (n+1)/2, d(F) = (floor(d(M))+1)/2, ...
    let d_m = (n as f64 + 1.0) / 2.0;
    let d_f = (d_m.floor() + 1.0) / 2.0;
    let d_e = (d_f.floor() + 1.0) / 2.0;
    let rank = |d: f64| d.floor() as usize; // 1-based from either end
    let lower = |d: f64| sorted[rank(d) - 1];
    let upper = |d: f64| sorted[n - rank(d)];
    LetterValues {
        min: sorted[0],
        lower_eighth: lower(d_e),
        lower_fourth: lower(d_f),
        median: lower(d_m),
        upper_fourth: upper(d_f),
        upper_eighth: upper(d_e),
        max: sorted[n - 1],
    }
}

/// Total length of the union of intervals, overlaps counted once.
fn union_length(mut intervals: Vec<(f64, f64)>) -> f64 {
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for (lo, hi) in intervals {
        match current {
            Some((clo, chi)) if lo <= chi => current = Some((clo, chi.max(hi))),
            Some((clo, chi)) => {
                total += chi - clo;
                current = Some((lo, hi));
                let _ = clo;
            }
            None => current = Some((lo, hi)),
        }
    }
    if let Some((lo, hi)) = current {
        total += hi - lo;
    }
    total
}

/// Per-class slice of the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassStat {
    pub class: TechniqueClass,
    pub count: usize,
    pub total_duration_s: f64,
    /// Present when the class has at least one event.
    pub duration_quantiles: Option<LetterValues>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusTotals {
    pub num_tracks: usize,
    pub num_singers: usize,
    pub num_events: usize,
    pub total_length_s: f64,
    pub mean_track_length_s: f64,
    pub mean_technique_length_s: f64,
    pub mean_coverage: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackCoverage {
    pub track_id: String,
    pub coverage: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
}

/// Everything [`corpus_stats`] computes, in deterministic order: classes in
/// vocabulary order, singers and tracks in first-appearance order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsReport {
    pub classes: Vec<ClassStat>,
    /// `unknown`-labeled events, tallied separately from the vocabulary.
    pub unknown_count: usize,
    pub unknown_duration_s: f64,
    pub singers: Vec<String>,
    /// `[singers x vocabulary]` event counts.
    pub per_singer: Vec<Vec<usize>>,
    pub coverage: Vec<TrackCoverage>,
    pub totals: CorpusTotals,
}

fn class_index(class: TechniqueClass) -> Option<usize> {
    VOCABULARY.iter().position(|&c| c == class)
}

/// Coverage of one track: length of the union of all technique intervals
/// (any class, `unknown` included) divided by the track duration.
pub fn track_coverage(track: &crate::annotation::TrackAnnotation) -> f64 {
    if track.events.is_empty() {
        return 0.0;
    }
    let intervals = track
        .events
        .iter()
        .map(|e| (e.onset_s, e.offset_s))
        .collect();
    union_length(intervals) / track.duration_s
}

/// Full descriptive statistics over a corpus.
pub fn corpus_stats(corpus: &Corpus) -> Result<StatsReport> {
    if corpus.tracks.is_empty() {
        return Err(Error::Invalid("empty corpus".into()));
    }
    let singers = corpus.singers();
    let singer_idx = |id: &str| singers.iter().position(|s| s == id).unwrap();

    let mut counts = [0usize; 15];
    let mut totals = [0.0f64; 15];
    let mut durations: Vec<Vec<f64>> = vec![Vec::new(); 15];
    let mut per_singer = vec![vec![0usize; 15]; singers.len()];
    let mut unknown_count = 0usize;
    let mut unknown_duration = 0.0f64;
    let mut coverage = Vec::with_capacity(corpus.tracks.len());
    let mut total_length = 0.0f64;

    for track in &corpus.tracks {
        total_length += track.duration_s;
        let si = singer_idx(&track.singer_id);
        for ev in &track.events {
            match class_index(ev.class) {
                Some(ci) => {
                    counts[ci] += 1;
                    totals[ci] += ev.duration_s();
                    durations[ci].push(ev.duration_s());
                    per_singer[si][ci] += 1;
                }
                None => {
                    unknown_count += 1;
                    unknown_duration += ev.duration_s();
                }
            }
        }
        coverage.push(TrackCoverage {
            track_id: track.track_id.clone(),
            coverage: track_coverage(track),
            year: track.year,
        });
    }

    let classes: Vec<ClassStat> = VOCABULARY
        .iter()
        .enumerate()
        .map(|(ci, &class)| {
            let quantiles = if durations[ci].is_empty() {
                None
            } else {
                let mut d = durations[ci].clone();
                d.sort_by(f64::total_cmp);
                Some(letter_values(&d))
            };
            ClassStat {
                class,
                count: counts[ci],
                total_duration_s: totals[ci],
                duration_quantiles: quantiles,
            }
        })
        .collect();

    let num_events: usize = counts.iter().sum();
    let technique_duration: f64 = totals.iter().sum();
    let mean_coverage = coverage.iter().map(|c| c.coverage).sum::<f64>() / coverage.len() as f64;
    let report = StatsReport {
        classes,
        unknown_count,
        unknown_duration_s: unknown_duration,
        singers: singers.clone(),
        per_singer,
        coverage,
        totals: CorpusTotals {
            num_tracks: corpus.tracks.len(),
            num_singers: singers.len(),
            num_events,
            total_length_s: total_length,
            mean_track_length_s: total_length / corpus.tracks.len() as f64,
            mean_technique_length_s: if num_events > 0 {
                technique_duration / num_events as f64
            } else {
                0.0
            },
            mean_coverage,
        },
    };
    Ok(report)
}

/// Letter-value summary of one class's event durations.
pub fn duration_quantiles(corpus: &Corpus, class: TechniqueClass) -> Result<LetterValues> {
    let mut durations: Vec<f64> = corpus
        .tracks
        .iter()
        .flat_map(|t| t.events.iter())
        .filter(|e| e.class == class)
        .map(|e| e.duration_s())
        .collect();
    if durations.is_empty() {
        return Err(Error::Invalid(format!("no events of class {class}")));
    }
    durations.sort_by(f64::total_cmp);
    Ok(letter_values(&durations))
}

/// Event counts per singer (rows, first-appearance order) and vocabulary
/// class (columns).
pub fn per_singer_distribution(corpus: &Corpus) -> (Vec<String>, Vec<Vec<usize>>) {
    let singers = corpus.singers();
    let mut matrix = vec![vec![0usize; VOCABULARY.len()]; singers.len()];
    for track in &corpus.tracks {
        let si = singers.iter().position(|s| *s == track.singer_id).unwrap();
        for ev in &track.events {
            if let Some(ci) = class_index(ev.class) {
                matrix[si][ci] += 1;
            }
        }
    }
    (singers, matrix)
}

/// Output format for [`render_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" => Ok(ReportFormat::Text),
            other => Err(Error::Invalid(format!("unknown report format '{other}'"))),
        }
    }
}

/// Deterministic serialization of a report.
pub fn render_report(report: &StatsReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Csv => {
            let mut out = String::from(
                "class,count,total_duration_s,min_s,lower_fourth_s,median_s,upper_fourth_s,max_s\n",
            );
            for c in &report.classes {
                match &c.duration_quantiles {
                    Some(q) => out.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        c.class, c.count, c.total_duration_s, q.min, q.lower_fourth, q.median,
                        q.upper_fourth, q.max
                    )),
                    None => out.push_str(&format!(
                        "{},{},{},,,,,\n",
                        c.class, c.count, c.total_duration_s
                    )),
                }
            }
            out.push_str(&format!(
                "unknown,{},{},,,,,\n",
                report.unknown_count, report.unknown_duration_s
            ));
            Ok(out)
        }
        ReportFormat::Text => {
            let mut out = String::new();
            out.push_str(&format!(
                "corpus: {} tracks, {} singers, {} events, {:.1} s total\n",
                report.totals.num_tracks,
                report.totals.num_singers,
                report.totals.num_events,
                report.totals.total_length_s
            ));
            out.push_str(&format!(
                "mean track length {:.2} s, mean technique length {:.3} s, mean coverage {:.3}\n\n",
                report.totals.mean_track_length_s,
                report.totals.mean_technique_length_s,
                report.totals.mean_coverage
            ));
            out.push_str(&format!(
                "{:<14}{:>8}{:>14}{:>10}{:>10}{:>10}\n",
                "class", "count", "duration_s", "median", "q1", "q3"
            ));
            for c in &report.classes {
                let (median, q1, q3) = match &c.duration_quantiles {
                    Some(q) => (
                        format!("{:.3}", q.median),
                        format!("{:.3}", q.lower_fourth),
                        format!("{:.3}", q.upper_fourth),
                    ),
                    None => ("-".into(), "-".into(), "-".into()),
                };
                out.push_str(&format!(
                    "{:<14}{:>8}{:>14.2}{:>10}{:>10}{:>10}\n",
                    c.class.name(),
                    c.count,
                    c.total_duration_s,
                    median,
                    q1,
                    q3
                ));
            }
            if report.unknown_count > 0 {
                out.push_str(&format!(
                    "{:<14}{:>8}{:>14.2}\n",
                    "unknown", report.unknown_count, report.unknown_duration_s
                ));
            }
            out.push_str("\nper-track coverage:\n");
            for c in &report.coverage {
                out.push_str(&format!("  {:<24}{:.3}\n", c.track_id, c.coverage));
            }
            Ok(out)
        }
    }
}
