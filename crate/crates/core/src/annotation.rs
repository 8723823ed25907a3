//! Technique labels, timed events, pitch contours, and corpus loading.
//!
//! Events are half-open intervals `[onset, offset)` in seconds. Frame rolls
//! discretize them at a fixed hop: frame `i` covers `[i*hop, (i+1)*hop)` and
//! an event marks a frame iff their intersection has positive length, so a
//! point touch at a frame boundary marks nothing.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::wav;

/// The 15 singing techniques of the annotation vocabulary plus `Unknown`
/// for regions that look like a technique but fit no label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TechniqueClass {
    Vibrato,
    Scooping,
    Drop,
    Bend,
    Hiccup,
    Melisma,
    Trill,
    Falsetto,
    Breathy,
    Whisper,
    Rasp,
    VocalFry,
    Spoken,
    Shout,
    TongueTrill,
    Unknown,
}

/// Broad technique category: how the technique manifests acoustically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TechniqueCategory {
    Pitch,
    Timbre,
    Misc,
}

/// The full 15-label vocabulary, in category order (pitch, timbre, misc).
pub const VOCABULARY: [TechniqueClass; 15] = [
    TechniqueClass::Vibrato,
    TechniqueClass::Scooping,
    TechniqueClass::Drop,
    TechniqueClass::Bend,
    TechniqueClass::Hiccup,
    TechniqueClass::Melisma,
    TechniqueClass::Trill,
    TechniqueClass::Falsetto,
    TechniqueClass::Breathy,
    TechniqueClass::Whisper,
    TechniqueClass::Rasp,
    TechniqueClass::VocalFry,
    TechniqueClass::Spoken,
    TechniqueClass::Shout,
    TechniqueClass::TongueTrill,
];

/// The nine classes common enough to appear in every cross-validation fold;
/// this is the detection target set.
pub const DETECTION_CLASSES: [TechniqueClass; 9] = [
    TechniqueClass::Bend,
    TechniqueClass::Breathy,
    TechniqueClass::Drop,
    TechniqueClass::Falsetto,
    TechniqueClass::Hiccup,
    TechniqueClass::Rasp,
    TechniqueClass::Scooping,
    TechniqueClass::Vibrato,
    TechniqueClass::VocalFry,
];

impl TechniqueClass {
    pub fn category(self) -> TechniqueCategory {
        use TechniqueClass::*;
        match self {
            Vibrato | Scooping | Drop | Bend | Hiccup | Melisma | Trill => {
                TechniqueCategory::Pitch
            }
            Falsetto | Breathy | Whisper | Rasp | VocalFry => TechniqueCategory::Timbre,
            Spoken | Shout | TongueTrill | Unknown => TechniqueCategory::Misc,
        }
    }

    /// Canonical lowercase name, as used in CSV files and reports.
    pub fn name(self) -> &'static str {
        use TechniqueClass::*;
        match self {
            Vibrato => "vibrato",
            Scooping => "scooping",
            Drop => "drop",
            Bend => "bend",
            Hiccup => "hiccup",
            Melisma => "melisma",
            Trill => "trill",
            Falsetto => "falsetto",
            Breathy => "breathy",
            Whisper => "whisper",
            Rasp => "rasp",
            VocalFry => "vocal_fry",
            Spoken => "spoken",
            Shout => "shout",
            TongueTrill => "tongue_trill",
            Unknown => "unknown",
        }
    }

    /// Case-insensitive label lookup. Spaces and hyphens are treated as
    /// underscores ("Vocal Fry" == "vocal_fry"). Anything unrecognized maps
    /// to `Unknown` so that files carrying rare or ad-hoc labels still load.
    pub fn parse(label: &str) -> TechniqueClass {
        let norm: String = label
            .trim()
            .chars()
            .map(|c| match c {
                ' ' | '-' => '_',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        for class in VOCABULARY {
            if class.name() == norm {
                return class;
            }
        }
        TechniqueClass::Unknown
    }
}

impl fmt::Display for TechniqueClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A labeled technique interval `[onset_s, offset_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TechniqueEvent {
    pub class: TechniqueClass,
    pub onset_s: f64,
    pub offset_s: f64,
}

impl TechniqueEvent {
    pub fn new(class: TechniqueClass, onset_s: f64, offset_s: f64) -> Self {
        TechniqueEvent {
            class,
            onset_s,
            offset_s,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.offset_s - self.onset_s
    }
}

/// One voiced pitch observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchPoint {
    pub time_s: f64,
    pub f0_hz: f64,
    pub confidence: f64,
}

/// A melodic pitch contour: strictly time-increasing voiced observations.
/// Times not present in the contour are unvoiced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PitchContour {
    pub points: Vec<PitchPoint>,
}

impl PitchContour {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The voiced point nearest to `time_s`, if any.
    pub fn nearest(&self, time_s: f64) -> Option<&PitchPoint> {
        if self.points.is_empty() {
            return None;
        }
        let idx = self
            .points
            .partition_point(|p| p.time_s < time_s)
            .min(self.points.len() - 1);
        let mut best = idx;
        if idx > 0 {
            let d_prev = (self.points[idx - 1].time_s - time_s).abs();
            let d_here = (self.points[idx].time_s - time_s).abs();
            // On exact ties prefer the earlier point.
            if d_prev <= d_here {
                best = idx - 1;
            }
        }
        Some(&self.points[best])
    }
}

/// Everything annotated about a single track.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackAnnotation {
    pub track_id: String,
    pub singer_id: String,
    pub duration_s: f64,
    pub year: Option<i32>,
    pub events: Vec<TechniqueEvent>,
    pub pitch: PitchContour,
    /// Alternative pitch contour from an external estimator, when available.
    pub pitch_estimated: Option<PitchContour>,
    pub audio_path: Option<PathBuf>,
}

impl TrackAnnotation {
    /// Check the type invariants, naming this track in any error.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::Track {
                track_id: self.track_id.clone(),
                message,
            })
        };
        if self.singer_id.is_empty() {
            return fail("empty singer_id".into());
        }
        if !(self.duration_s > 0.0) {
            return fail(format!("non-positive duration {}", self.duration_s));
        }
        for ev in &self.events {
            if !(ev.onset_s < ev.offset_s) {
                return fail(format!(
                    "event {} has onset {} >= offset {}",
                    ev.class, ev.onset_s, ev.offset_s
                ));
            }
            if ev.onset_s < 0.0 || ev.offset_s > self.duration_s {
                return fail(format!(
                    "event {} [{}, {}) outside track duration {}",
                    ev.class, ev.onset_s, ev.offset_s, self.duration_s
                ));
            }
        }
        Ok(())
    }
}

/// An annotated corpus; track ids are unique.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub tracks: Vec<TrackAnnotation>,
}

impl Corpus {
    pub fn new(tracks: Vec<TrackAnnotation>) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in &tracks {
            t.validate()?;
            if !seen.insert(t.track_id.clone()) {
                return Err(Error::Track {
                    track_id: t.track_id.clone(),
                    message: "duplicate track_id".into(),
                });
            }
        }
        Ok(Corpus { tracks })
    }

    /// Singers in first-appearance order.
    pub fn singers(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for t in &self.tracks {
            if seen.insert(t.singer_id.as_str()) {
                out.push(t.singer_id.clone());
            }
        }
        out
    }

    pub fn track(&self, track_id: &str) -> Option<&TrackAnnotation> {
        self.tracks.iter().find(|t| t.track_id == track_id)
    }
}

/// Per-class, per-frame activity matrix. Row order is `class_order`; frame
/// `i` covers `[i*hop_s, (i+1)*hop_s)`. Binary rolls hold only 0.0 and 1.0;
/// probability rolls hold values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRoll {
    pub class_order: Vec<TechniqueClass>,
    pub hop_s: f64,
    pub num_frames: usize,
    /// Row-major `[classes x frames]`.
    pub values: Vec<f32>,
}

impl FrameRoll {
    pub fn zeros(class_order: Vec<TechniqueClass>, num_frames: usize, hop_s: f64) -> Self {
        let values = vec![0.0; class_order.len() * num_frames];
        FrameRoll {
            class_order,
            hop_s,
            num_frames,
            values,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_order.len()
    }

    pub fn get(&self, class_idx: usize, frame: usize) -> f32 {
        self.values[class_idx * self.num_frames + frame]
    }

    pub fn set(&mut self, class_idx: usize, frame: usize, value: f32) {
        self.values[class_idx * self.num_frames + frame] = value;
    }

    pub fn row(&self, class_idx: usize) -> &[f32] {
        &self.values[class_idx * self.num_frames..(class_idx + 1) * self.num_frames]
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// Parse an events CSV (`onset_s,offset_s,label`, one event per row).
///
/// The header line is optional; a first line whose first field is not a
/// number is skipped. Events come back sorted by onset. Unrecognized labels
/// map to [`TechniqueClass::Unknown`]. Errors cite the physical line number.
pub fn parse_events(text: &str) -> Result<Vec<TechniqueEvent>> {
    let mut events = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if line_no == 1 && fields[0].parse::<f64>().is_err() {
            continue; // header
        }
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let onset: f64 = fields[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad onset '{}'", fields[0]),
        })?;
        let offset: f64 = fields[1].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad offset '{}'", fields[1]),
        })?;
        if !(onset < offset) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("onset {onset} >= offset {offset}"),
            });
        }
        if onset < 0.0 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("negative onset {onset}"),
            });
        }
        events.push(TechniqueEvent::new(
            TechniqueClass::parse(fields[2]),
            onset,
            offset,
        ));
    }
    events.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
    Ok(events)
}

/// Render events to the canonical CSV form accepted by [`parse_events`].
pub fn serialize_events(events: &[TechniqueEvent]) -> String {
    let mut out = String::from("onset_s,offset_s,label\n");
    for ev in events {
        out.push_str(&format!("{},{},{}\n", ev.onset_s, ev.offset_s, ev.class));
    }
    out
}

/// Parse a pitch CSV (`time_s,f0_hz[,confidence]`).
///
/// Missing confidence defaults to 1.0. Rows with `f0 <= 0` mark unvoiced
/// time and are dropped. The raw time column must be strictly increasing.
pub fn parse_pitch(text: &str) -> Result<PitchContour> {
    let mut points = Vec::new();
    let mut last_time: Option<f64> = None;
    for (line_no, raw) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if line_no == 1 && fields[0].parse::<f64>().is_err() {
            continue; // header
        }
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 or 3 fields, found {}", fields.len()),
            });
        }
        let time: f64 = fields[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad time '{}'", fields[0]),
        })?;
        let f0: f64 = fields[1].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad f0 '{}'", fields[1]),
        })?;
        let confidence: f64 = match fields.get(2) {
            Some(c) => c.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad confidence '{c}'"),
            })?,
            None => 1.0,
        };
        if let Some(prev) = last_time {
            if time <= prev {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("time {time} not increasing (previous {prev})"),
                });
            }
        }
        last_time = Some(time);
        if f0 > 0.0 {
            points.push(PitchPoint {
                time_s: time,
                f0_hz: f0,
                confidence,
            });
        }
    }
    Ok(PitchContour { points })
}

/// Render a contour to the canonical pitch CSV form.
pub fn serialize_pitch(contour: &PitchContour) -> String {
    let mut out = String::from("time_s,f0_hz,confidence\n");
    for p in &contour.points {
        out.push_str(&format!("{},{},{}\n", p.time_s, p.f0_hz, p.confidence));
    }
    out
}

/// Frames of `[0, num_frames)` that an interval `[onset, offset)` overlaps
/// with positive length.
fn overlapping_frames(
    onset: f64,
    offset: f64,
    num_frames: usize,
    hop_s: f64,
) -> impl Iterator<Item = usize> {
    // Guess the range by division, then confirm each frame by multiplication
    // so exact boundary touches never mark a frame.
    let lo = ((onset / hop_s).floor() as isize - 1).max(0) as usize;
    let hi = ((offset / hop_s).ceil() as isize + 1).max(0) as usize;
    let hi = hi.min(num_frames);
    (lo..hi).filter(move |&i| onset < (i + 1) as f64 * hop_s && offset > i as f64 * hop_s)
}

/// Rasterize events into a binary frame roll.
///
/// A cell `(c, i)` is set iff some event of class `c` overlaps frame `i`
/// with positive length. Same-class overlaps merge; events past the end of
/// the roll are truncated.
pub fn rasterize(
    events: &[TechniqueEvent],
    num_frames: usize,
    hop_s: f64,
    class_order: &[TechniqueClass],
) -> FrameRoll {
    assert!(hop_s > 0.0, "hop must be positive");
    let mut roll = FrameRoll::zeros(class_order.to_vec(), num_frames, hop_s);
    for ev in events {
        let Some(c) = class_order.iter().position(|&k| k == ev.class) else {
            continue;
        };
        for i in overlapping_frames(ev.onset_s, ev.offset_s, num_frames, hop_s) {
            roll.set(c, i, 1.0);
        }
    }
    roll
}

/// Decode a binary roll back into events: maximal runs of active frames per
/// class become `[start*hop, (end+1)*hop)`; events shorter than
/// `min_duration_s` are dropped.
pub fn roll_to_events(roll: &FrameRoll, min_duration_s: f64) -> Vec<TechniqueEvent> {
    debug_assert!(roll.is_binary());
    let mut events = Vec::new();
    for (c, &class) in roll.class_order.iter().enumerate() {
        let row = roll.row(c);
        let mut start: Option<usize> = None;
        for i in 0..=roll.num_frames {
            let active = i < roll.num_frames && row[i] != 0.0;
            match (start, active) {
                (None, true) => start = Some(i),
                (Some(s), false) => {
                    let onset = s as f64 * roll.hop_s;
                    let offset = i as f64 * roll.hop_s;
                    if offset - onset >= min_duration_s {
                        events.push(TechniqueEvent::new(class, onset, offset));
                    }
                    start = None;
                }
                _ => {}
            }
        }
    }
    events.sort_by(|a, b| {
        a.onset_s
            .total_cmp(&b.onset_s)
            .then(a.class.cmp(&b.class))
    });
    events
}

/// One entry of the corpus manifest JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub track_id: String,
    pub singer_id: String,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch: Option<String>,
    /// Estimator-produced pitch variant, used by the `est` pitch conditions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch_est: Option<String>,
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Load a corpus from a manifest (JSON list of [`ManifestEntry`]).
///
/// Relative paths resolve against the manifest's directory. When a track has
/// audio, its duration comes from the WAV header; otherwise the manifest
/// value is used. Every track is validated and ids must be unique.
pub fn load_corpus(manifest_path: &Path) -> Result<Corpus> {
    let text = read_to_string(manifest_path)?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let mut tracks = Vec::with_capacity(entries.len());
    for entry in entries {
        let resolve = |rel: &str| base.join(rel);
        let audio_path = entry.audio.as_deref().map(resolve);
        let duration_s = match &audio_path {
            Some(p) => wav::read_info(p)?.duration_s(),
            None => entry.duration_s,
        };
        let events = match entry.events.as_deref() {
            Some(rel) => {
                let p = resolve(rel);
                parse_events(&read_to_string(&p)?).map_err(|e| match e {
                    Error::Parse { line, message } => Error::Parse {
                        line,
                        message: format!("{}: {}", p.display(), message),
                    },
                    e => e,
                })?
            }
            None => Vec::new(),
        };
        let pitch = match entry.pitch.as_deref() {
            Some(rel) => parse_pitch(&read_to_string(&resolve(rel))?)?,
            None => PitchContour::default(),
        };
        let pitch_estimated = match entry.pitch_est.as_deref() {
            Some(rel) => Some(parse_pitch(&read_to_string(&resolve(rel))?)?),
            None => None,
        };
        tracks.push(TrackAnnotation {
            track_id: entry.track_id,
            singer_id: entry.singer_id,
            duration_s,
            year: entry.year,
            events,
            pitch,
            pitch_estimated,
            audio_path,
        });
    }
    Corpus::new(tracks)
}
