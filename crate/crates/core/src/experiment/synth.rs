//! Synthetic vocal corpus with injected, annotated technique surrogates.
//!
//! Each track is a harmonic melody (3 harmonics, random pentatonic note
//! sequence, per-singer register offset). Surrogates:
//!
//! - vibrato: 6 Hz sinusoidal FM of +-1 semitone, 0.5-1.5 s, inside a note
//! - scooping: rising glide from -3 semitones over 0.1-0.3 s at note onset
//! - drop: falling glide of 3 semitones over 0.1-0.3 s at note end
//! - breathy: band-passed noise added at -10 dB relative for 0.3-1.0 s
//! - falsetto: pitch +12 semitones with harmonics 2-3 attenuated 12 dB,
//!   0.5-2.0 s
//!
//! Ground-truth pitch is emitted at 10 ms hop with confidence 1.0; the
//! "estimated" variant corrupts it with seeded 5% octave errors and
//! confidences drawn in [0.3, 1.0]. Everything is a pure function of the
//! seed: identical seeds give bit-identical audio and annotations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::{
    load_corpus, serialize_events, serialize_pitch, Corpus, ManifestEntry, PitchContour,
    PitchPoint, TechniqueClass, TechniqueEvent,
};
use crate::error::{Error, Result};
use crate::io::wav;
use crate::rng::SplitMix64;

pub const SAMPLE_RATE: u32 = 44100;
const PITCH_HOP_S: f64 = 0.010;
const BASE_HZ: f64 = 330.0;
const PENTATONIC: [f64; 5] = [0.0, 2.0, 4.0, 7.0, 9.0];
const NOTE_GAP_S: f64 = 0.03;
const ATTACK_S: f64 = 0.02;
const RELEASE_S: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_singers: usize,
    pub tracks_per_singer: usize,
    pub track_len_s: f64,
    pub classes: Vec<TechniqueClass>,
    /// Expected events per class per track (Poisson).
    pub events_per_class: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_singers: 14,
            tracks_per_singer: 3,
            track_len_s: 30.0,
            classes: vec![
                TechniqueClass::Vibrato,
                TechniqueClass::Scooping,
                TechniqueClass::Drop,
                TechniqueClass::Breathy,
                TechniqueClass::Falsetto,
            ],
            events_per_class: 6.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let allowed = [
            TechniqueClass::Vibrato,
            TechniqueClass::Scooping,
            TechniqueClass::Drop,
            TechniqueClass::Breathy,
            TechniqueClass::Falsetto,
        ];
        for c in &self.classes {
            if !allowed.contains(c) {
                return Err(Error::Config(format!("no synthetic surrogate for {c}")));
            }
        }
        if self.n_singers == 0 || self.tracks_per_singer == 0 || self.track_len_s < 5.0 {
            return Err(Error::Config("degenerate synth spec".into()));
        }
        if self.events_per_class < 0.0 {
            return Err(Error::Config("negative event rate".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Note {
    start: f64,
    end: f64,
    semi: f64,
    /// At most one note-anchored technique per note.
    used: bool,
}

#[derive(Debug, Clone, Copy)]
struct Glide {
    start: f64,
    end: f64,
    /// Semitone offset at the start of the glide (goes linearly to
    /// `to_semi` at the end).
    from_semi: f64,
    to_semi: f64,
}

#[derive(Debug, Default, Clone)]
struct Modulations {
    /// Scoop/drop glides, each bound to one note.
    glides: Vec<Glide>,
    /// (start, end) of 6 Hz, +-1 semitone FM regions.
    vibratos: Vec<(f64, f64)>,
    /// (start, end) of +12 semitone regions with damped upper harmonics.
    falsettos: Vec<(f64, f64)>,
    /// (start, end) of added-noise regions.
    breathys: Vec<(f64, f64)>,
}

fn overlaps(regions: &[(f64, f64)], start: f64, end: f64) -> bool {
    regions.iter().any(|&(s, e)| start < e && s < end)
}

struct TrackSynth {
    notes: Vec<Note>,
    mods: Modulations,
    events: Vec<TechniqueEvent>,
}

fn plan_track(
    spec: &SynthSpec,
    singer_offset: f64,
    rng: &mut SplitMix64,
) -> TrackSynth {
    let len = spec.track_len_s;
    let mut notes = Vec::new();
    let mut t = 0.05;
    while t + 0.55 < len - 0.05 {
        let dur = rng.range_f64(0.55, 1.15).min(len - 0.05 - t);
        let degree = PENTATONIC[rng.below(PENTATONIC.len())];
        notes.push(Note {
            start: t,
            end: t + dur,
            semi: singer_offset + degree,
            used: false,
        });
        t += dur + NOTE_GAP_S;
    }

    let mut mods = Modulations::default();
    let mut events: Vec<TechniqueEvent> = Vec::new();
    // Fixed placement order with falsetto last, so its overlap checks see
    // every note-anchored modulation regardless of the spec's class order.
    let placement_order = [
        TechniqueClass::Vibrato,
        TechniqueClass::Scooping,
        TechniqueClass::Drop,
        TechniqueClass::Breathy,
        TechniqueClass::Falsetto,
    ];
    for &class in placement_order.iter().filter(|c| spec.classes.contains(c)) {
        let count = rng.poisson(spec.events_per_class);
        for _ in 0..count {
            match class {
                TechniqueClass::Vibrato => {
                    let candidates: Vec<usize> = notes
                        .iter()
                        .enumerate()
                        .filter(|(_, n)| !n.used && n.end - n.start >= 0.75)
                        .map(|(i, _)| i)
                        .collect();
                    if candidates.is_empty() {
                        continue;
                    }
                    let ni = candidates[rng.below(candidates.len())];
                    let note_dur = notes[ni].end - notes[ni].start;
                    let d = rng.range_f64(0.5, (note_dur - 0.2).min(1.5));
                    let start =
                        rng.range_f64(notes[ni].start + 0.1, notes[ni].end - d - 0.1);
                    notes[ni].used = true;
                    mods.vibratos.push((start, start + d));
                    events.push(TechniqueEvent::new(class, start, start + d));
                }
                TechniqueClass::Scooping => {
                    let candidates: Vec<usize> = notes
                        .iter()
                        .enumerate()
                        .filter(|(_, n)| !n.used && n.end - n.start >= 0.35)
                        .map(|(i, _)| i)
                        .collect();
                    if candidates.is_empty() {
                        continue;
                    }
                    let ni = candidates[rng.below(candidates.len())];
                    let d = rng.range_f64(0.1, 0.3);
                    let start = notes[ni].start;
                    notes[ni].used = true;
                    mods.glides.push(Glide {
                        start,
                        end: start + d,
                        from_semi: -3.0,
                        to_semi: 0.0,
                    });
                    events.push(TechniqueEvent::new(class, start, start + d));
                }
                TechniqueClass::Drop => {
                    let candidates: Vec<usize> = notes
                        .iter()
                        .enumerate()
                        .filter(|(_, n)| !n.used && n.end - n.start >= 0.35)
                        .map(|(i, _)| i)
                        .collect();
                    if candidates.is_empty() {
                        continue;
                    }
                    let ni = candidates[rng.below(candidates.len())];
                    let d = rng.range_f64(0.1, 0.3);
                    let end = notes[ni].end;
                    notes[ni].used = true;
                    mods.glides.push(Glide {
                        start: end - d,
                        end,
                        from_semi: 0.0,
                        to_semi: -3.0,
                    });
                    events.push(TechniqueEvent::new(class, end - d, end));
                }
                TechniqueClass::Falsetto => {
                    // Keep the register shift clear of the other pitch
                    // modulations so each surrogate stays unambiguous.
                    for _ in 0..40 {
                        let d = rng.range_f64(0.5, 2.0_f64.min(len - 0.2));
                        let start = rng.range_f64(0.1, len - d - 0.1);
                        let glide_regions: Vec<(f64, f64)> =
                            mods.glides.iter().map(|g| (g.start, g.end)).collect();
                        if !overlaps(&mods.falsettos, start, start + d)
                            && !overlaps(&mods.vibratos, start, start + d)
                            && !overlaps(&glide_regions, start, start + d)
                        {
                            mods.falsettos.push((start, start + d));
                            events.push(TechniqueEvent::new(class, start, start + d));
                            break;
                        }
                    }
                }
                TechniqueClass::Breathy => {
                    for _ in 0..40 {
                        let d = rng.range_f64(0.3, 1.0);
                        let start = rng.range_f64(0.1, len - d - 0.1);
                        if !overlaps(&mods.breathys, start, start + d) {
                            mods.breathys.push((start, start + d));
                            events.push(TechniqueEvent::new(class, start, start + d));
                            break;
                        }
                    }
                }
                other => unreachable!("no surrogate for {other}"),
            }
        }
    }
    events.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
    TrackSynth {
        notes,
        mods,
        events,
    }
}

/// Instantaneous voiced pitch in semitones relative to `BASE_HZ`, or `None`
/// in the gaps between notes.
fn semitone_at(plan: &TrackSynth, t: f64, note_hint: &mut usize) -> Option<f64> {
    let notes = &plan.notes;
    while *note_hint + 1 < notes.len() && t >= notes[*note_hint].end {
        *note_hint += 1;
    }
    let note = &notes[*note_hint];
    if t < note.start || t >= note.end {
        return None;
    }
    let mut semi = note.semi;
    for g in &plan.mods.glides {
        if t >= g.start && t < g.end {
            let u = (t - g.start) / (g.end - g.start);
            semi += g.from_semi + (g.to_semi - g.from_semi) * u;
        }
    }
    for &(s, e) in &plan.mods.vibratos {
        if t >= s && t < e {
            semi += (2.0 * std::f64::consts::PI * 6.0 * (t - s)).sin();
        }
    }
    for &(s, e) in &plan.mods.falsettos {
        if t >= s && t < e {
            semi += 12.0;
        }
    }
    Some(semi)
}

fn in_any(regions: &[(f64, f64)], t: f64) -> bool {
    regions.iter().any(|&(s, e)| t >= s && t < e)
}

/// RBJ bandpass biquad (constant skirt gain), applied in sequence.
struct Bandpass {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Bandpass {
    fn new(center_hz: f64, q: f64) -> Self {
        let w = 2.0 * std::f64::consts::PI * center_hz / SAMPLE_RATE as f64;
        let alpha = w.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Bandpass {
            b0: alpha / a0,
            b2: -alpha / a0,
            a1: -2.0 * w.cos() / a0,
            a2: (1.0 - alpha) / a0,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b2 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn synthesize_samples(plan: &TrackSynth, len_s: f64, rng: &mut SplitMix64) -> Vec<f32> {
    let n = (len_s * SAMPLE_RATE as f64).round() as usize;
    let dt = 1.0 / SAMPLE_RATE as f64;
    let mut samples = vec![0.0f32; n];
    let mut phase = 0.0f64;
    let mut hint = 0usize;
    let amp_note = 0.22;
    for (i, out) in samples.iter_mut().enumerate() {
        let t = i as f64 * dt;
        let Some(semi) = semitone_at(plan, t, &mut hint) else {
            continue;
        };
        let note = &plan.notes[hint.min(plan.notes.len() - 1)];
        let env_in = ((t - note.start) / ATTACK_S).clamp(0.0, 1.0);
        let env_out = ((note.end - t) / RELEASE_S).clamp(0.0, 1.0);
        let env = amp_note * env_in.min(env_out);
        let f0 = BASE_HZ * (semi / 12.0).exp2();
        phase += 2.0 * std::f64::consts::PI * f0 * dt;
        let falsetto = in_any(&plan.mods.falsettos, t);
        let damp = if falsetto { 10f64.powf(-12.0 / 20.0) } else { 1.0 };
        let tone = phase.sin() + 0.5 * damp * (2.0 * phase).sin() + 0.25 * damp * (3.0 * phase).sin();
        *out = (env * tone) as f32;
    }

    // Breathy regions: band-passed noise at -10 dB relative to the local
    // tone level, with short fades at the edges.
    for &(start, end) in &plan.mods.breathys {
        let lo = (start * SAMPLE_RATE as f64).round() as usize;
        let hi = ((end * SAMPLE_RATE as f64).round() as usize).min(n);
        if lo >= hi {
            continue;
        }
        let tone_rms = {
            let sum_sq: f64 = samples[lo..hi].iter().map(|&v| (v as f64) * (v as f64)).sum();
            (sum_sq / (hi - lo) as f64).sqrt().max(0.02)
        };
        let mut filter = Bandpass::new(3000.0, 0.9);
        let mut noise: Vec<f64> = (0..hi - lo)
            .map(|_| filter.process(rng.range_f64(-1.0, 1.0)))
            .collect();
        let noise_rms = {
            let sum_sq: f64 = noise.iter().map(|&v| v * v).sum();
            (sum_sq / noise.len() as f64).sqrt().max(1e-12)
        };
        let gain = tone_rms * 10f64.powf(-10.0 / 20.0) / noise_rms;
        let fade = (0.010 * SAMPLE_RATE as f64) as usize;
        for (k, nv) in noise.iter_mut().enumerate() {
            let ramp_in = ((k + 1) as f64 / fade as f64).min(1.0);
            let ramp_out = ((hi - lo - k) as f64 / fade as f64).min(1.0);
            *nv *= gain * ramp_in.min(ramp_out);
        }
        for (k, s) in samples[lo..hi].iter_mut().enumerate() {
            *s += noise[k] as f32;
        }
    }
    samples
}

fn ground_truth_pitch(plan: &TrackSynth, len_s: f64) -> PitchContour {
    let mut points = Vec::new();
    let mut hint = 0usize;
    let mut k = 0usize;
    loop {
        let t = k as f64 * PITCH_HOP_S;
        if t > len_s {
            break;
        }
        if let Some(semi) = semitone_at(plan, t, &mut hint) {
            points.push(PitchPoint {
                time_s: t,
                f0_hz: BASE_HZ * (semi / 12.0).exp2(),
                confidence: 1.0,
            });
        }
        k += 1;
    }
    PitchContour { points }
}

fn estimated_pitch(gt: &PitchContour, rng: &mut SplitMix64) -> PitchContour {
    let points = gt
        .points
        .iter()
        .map(|p| {
            let f0 = if rng.chance(0.05) {
                if rng.chance(0.5) {
                    p.f0_hz * 2.0
                } else {
                    p.f0_hz * 0.5
                }
            } else {
                p.f0_hz
            };
            PitchPoint {
                time_s: p.time_s,
                f0_hz: f0,
                confidence: rng.range_f64(0.3, 1.0),
            }
        })
        .collect();
    PitchContour { points }
}

/// Generate a corpus into `out_dir`: per-track WAV audio, events CSV,
/// ground-truth and estimated pitch CSVs, plus `manifest.json`. Returns the
/// corpus loaded back through the regular manifest path.
pub fn synth_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<Corpus> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut root = SplitMix64::new(spec.seed);
    let mut entries = Vec::new();
    for s in 0..spec.n_singers {
        let mut singer_rng = root.fork(s as u64 + 1);
        let singer_id = format!("singer{s:02}");
        let offset = singer_rng.range_f64(-8.0, 8.0);
        for tr in 0..spec.tracks_per_singer {
            let mut rng = singer_rng.fork(tr as u64 + 1);
            let track_id = format!("{singer_id}_t{tr}");
            let plan = plan_track(spec, offset, &mut rng);
            let samples = synthesize_samples(&plan, spec.track_len_s, &mut rng);
            let gt = ground_truth_pitch(&plan, spec.track_len_s);
            let est = estimated_pitch(&gt, &mut rng);

            let wav_name = format!("{track_id}.wav");
            let events_name = format!("{track_id}.events.csv");
            let pitch_name = format!("{track_id}.pitch.csv");
            let pitch_est_name = format!("{track_id}.pitch_est.csv");
            wav::write_mono_i16(&out_dir.join(&wav_name), &samples, SAMPLE_RATE)?;
            let write = |name: &str, text: String| -> Result<()> {
                let p = out_dir.join(name);
                std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
            };
            write(&events_name, serialize_events(&plan.events))?;
            write(&pitch_name, serialize_pitch(&gt))?;
            write(&pitch_est_name, serialize_pitch(&est))?;
            entries.push(ManifestEntry {
                track_id,
                singer_id: singer_id.clone(),
                duration_s: spec.track_len_s,
                year: None,
                audio: Some(wav_name),
                events: Some(events_name),
                pitch: Some(pitch_name),
                pitch_est: Some(pitch_est_name),
            });
        }
    }
    let manifest_path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&entries)?;
    std::fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    load_corpus(&manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(seed: u64) -> SynthSpec {
        SynthSpec {
            n_singers: 2,
            tracks_per_singer: 1,
            track_len_s: 10.0,
            events_per_class: 3.0,
            seed,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn zero_rate_gives_plain_melodies() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            events_per_class: 0.0,
            ..small_spec(1)
        };
        let corpus = synth_corpus(&spec, dir.path()).unwrap();
        assert_eq!(corpus.tracks.len(), 2);
        assert!(corpus.tracks.iter().all(|t| t.events.is_empty()));
        assert!(corpus.tracks.iter().all(|t| !t.pitch.is_empty()));
    }

    #[test]
    fn same_seed_bit_identical_outputs() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        synth_corpus(&small_spec(7), d1.path()).unwrap();
        synth_corpus(&small_spec(7), d2.path()).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(d1.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            let a = std::fs::read(d1.path().join(&name)).unwrap();
            let b = std::fs::read(d2.path().join(&name)).unwrap();
            assert_eq!(a, b, "file {name} differs");
        }
    }

    #[test]
    fn events_within_bounds_and_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = synth_corpus(&small_spec(3), dir.path()).unwrap();
        for track in &corpus.tracks {
            let mut prev = 0.0;
            for ev in &track.events {
                assert!(ev.onset_s >= 0.0 && ev.offset_s <= track.duration_s);
                assert!(ev.onset_s < ev.offset_s);
                assert!(ev.onset_s >= prev);
                prev = ev.onset_s;
            }
        }
    }

    #[test]
    fn vibrato_rate_near_six_hz() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            n_singers: 3,
            tracks_per_singer: 2,
            track_len_s: 15.0,
            events_per_class: 6.0,
            seed: 11,
            ..SynthSpec::default()
        };
        let corpus = synth_corpus(&spec, dir.path()).unwrap();
        let mut measured = 0usize;
        for track in &corpus.tracks {
            for ev in &track.events {
                if ev.class != TechniqueClass::Vibrato {
                    continue;
                }
                // log-f0 inside the event, detrended by its mean.
                let pts: Vec<(f64, f64)> = track
                    .pitch
                    .points
                    .iter()
                    .filter(|p| p.time_s >= ev.onset_s && p.time_s < ev.offset_s)
                    .map(|p| (p.time_s, p.f0_hz.ln()))
                    .collect();
                assert!(pts.len() > 20, "vibrato too short in contour");
                let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
                let detrended: Vec<(f64, f64)> =
                    pts.iter().map(|&(t, v)| (t, v - mean)).collect();
                // Crossing times by linear interpolation.
                let mut crossings = Vec::new();
                for w in detrended.windows(2) {
                    let (t0, v0) = w[0];
                    let (t1, v1) = w[1];
                    if v0 == 0.0 {
                        crossings.push(t0);
                    } else if v0 * v1 < 0.0 {
                        crossings.push(t0 + (t1 - t0) * v0 / (v0 - v1));
                    }
                }
                assert!(crossings.len() >= 3, "too few crossings");
                let rate = (crossings.len() - 1) as f64
                    / (2.0 * (crossings.last().unwrap() - crossings.first().unwrap()));
                assert!(
                    (rate - 6.0).abs() <= 0.5,
                    "vibrato rate {rate:.2} Hz in {}",
                    track.track_id
                );
                measured += 1;
            }
        }
        assert!(measured >= 5, "only {measured} vibrato events generated");
    }

    #[test]
    fn falsetto_region_is_octave_up_in_contour() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            n_singers: 2,
            tracks_per_singer: 2,
            track_len_s: 15.0,
            classes: vec![TechniqueClass::Falsetto],
            events_per_class: 3.0,
            seed: 5,
            ..SynthSpec::default()
        };
        let corpus = synth_corpus(&spec, dir.path()).unwrap();
        let mut checked = 0usize;
        for track in &corpus.tracks {
            for ev in &track.events {
                // Every voiced contour point inside a falsetto event sits at
                // least an octave above the lowest pentatonic degree.
                let floor_hz = BASE_HZ * ((-8.0_f64 + 12.0) / 12.0).exp2();
                for p in &track.pitch.points {
                    if p.time_s >= ev.onset_s && p.time_s < ev.offset_s {
                        assert!(p.f0_hz >= floor_hz, "{} Hz too low", p.f0_hz);
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn estimated_pitch_has_octave_errors_and_spread_confidence() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = synth_corpus(&small_spec(13), dir.path()).unwrap();
        let mut octave_errors = 0usize;
        let mut total = 0usize;
        for track in &corpus.tracks {
            let est = track.pitch_estimated.as_ref().unwrap();
            assert_eq!(est.points.len(), track.pitch.points.len());
            for (g, e) in track.pitch.points.iter().zip(&est.points) {
                total += 1;
                let ratio = e.f0_hz / g.f0_hz;
                if (ratio - 2.0).abs() < 1e-9 || (ratio - 0.5).abs() < 1e-9 {
                    octave_errors += 1;
                } else {
                    assert!((ratio - 1.0).abs() < 1e-9);
                }
                assert!((0.3..1.0).contains(&e.confidence));
            }
        }
        let frac = octave_errors as f64 / total as f64;
        assert!((frac - 0.05).abs() < 0.02, "octave error rate {frac}");
    }
}
